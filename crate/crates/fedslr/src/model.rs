//! Desk-scale differentiable classifiers: multinomial logistic regression and
//! small MLPs with analytic backpropagation gradients and cross-entropy loss.

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, Matrix};
use crate::reshape::{pairwise_mean, LayerKind, ParamSet};
use crate::rng::{self, labels};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Fully-connected classifier description. `layer_sizes` runs from the input
/// dimension through hidden widths to the output layer, which must equal
/// `num_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid(
                "layer_sizes needs at least an input and an output size",
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("layer sizes must be >= 1"));
        }
        if *self.layer_sizes.last().unwrap() != self.num_classes {
            return Err(Error::invalid(format!(
                "output size {} does not match num_classes {}",
                self.layer_sizes.last().unwrap(),
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Parameter layout: per dense layer a weight block followed by its bias.
    pub fn param_shapes(&self) -> Vec<LayerKind> {
        let mut shapes = Vec::new();
        for pair in self.layer_sizes.windows(2) {
            shapes.push(LayerKind::Dense {
                out_features: pair[1],
                in_features: pair[0],
            });
            shapes.push(LayerKind::Passthrough { len: pair[1] });
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|k| k.element_count()).sum()
    }

    /// Glorot-uniform weights, zero biases, seeded.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = rng::stream(seed, &[labels::INIT]);
        let mut layers = Vec::new();
        for pair in self.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push((
                LayerKind::Dense {
                    out_features: fan_out,
                    in_features: fan_in,
                },
                weights,
            ));
            layers.push((LayerKind::Passthrough { len: fan_out }, vec![0.0; fan_out]));
        }
        ParamSet::new(layers).expect("layout is consistent by construction")
    }

    fn check_params(&self, w: &ParamSet) -> Result<()> {
        if w.shapes() != self.param_shapes() {
            return Err(Error::shape("parameters do not match model spec"));
        }
        Ok(())
    }
}

/// A labeled minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::invalid("non-finite features"));
        }
        Ok(Batch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

struct ForwardTrace {
    /// Pre-activations per dense layer.
    pre: Vec<Vec<f64>>,
    /// Post-activations per dense layer (last entry are raw logits).
    post: Vec<Vec<f64>>,
}

fn forward_sample(spec: &ModelSpec, w: &ParamSet, x: &[f64]) -> ForwardTrace {
    let num_dense = spec.layer_sizes.len() - 1;
    let mut pre = Vec::with_capacity(num_dense);
    let mut post = Vec::with_capacity(num_dense);
    let mut current: Vec<f64> = x.to_vec();
    for l in 0..num_dense {
        let (in_dim, out_dim) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let weights = w.layer_values(2 * l);
        let bias = w.layer_values(2 * l + 1);
        let mut z = vec![0.0; out_dim];
        for o in 0..out_dim {
            let mut acc = bias[o];
            let row = &weights[o * in_dim..(o + 1) * in_dim];
            for (wij, xi) in row.iter().zip(&current) {
                acc += wij * xi;
            }
            z[o] = acc;
        }
        let activated: Vec<f64> = if l + 1 == num_dense {
            z.clone()
        } else {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        };
        pre.push(z);
        post.push(activated.clone());
        current = activated;
    }
    ForwardTrace { pre, post }
}

fn log_softmax_loss(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Mean cross-entropy of the batch under parameters `w`.
pub fn loss(spec: &ModelSpec, w: &ParamSet, batch: &Batch) -> Result<f64> {
    spec.check_params(w)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_labels(spec, batch)?;
    let per_sample: Vec<f64> = (0..batch.len())
        .map(|s| {
            let x: Vec<f64> = (0..spec.input_dim())
                .map(|j| batch.features.get(s, j))
                .collect();
            let trace = forward_sample(spec, w, &x);
            log_softmax_loss(trace.post.last().unwrap(), batch.labels[s])
        })
        .collect();
    Ok(pairwise_sum(&per_sample) / batch.len() as f64)
}

fn check_labels(spec: &ModelSpec, batch: &Batch) -> Result<()> {
    if batch.features.cols() != spec.input_dim() {
        return Err(Error::shape(format!(
            "batch dimension {} vs model input {}",
            batch.features.cols(),
            spec.input_dim()
        )));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= spec.num_classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            spec.num_classes
        )));
    }
    Ok(())
}

/// Analytic backpropagation gradient of [`loss`], same shape as `w`.
pub fn gradient(spec: &ModelSpec, w: &ParamSet, batch: &Batch) -> Result<ParamSet> {
    spec.check_params(w)?;
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_labels(spec, batch)?;
    let num_dense = spec.layer_sizes.len() - 1;
    let per_sample: Vec<ParamSet> = (0..batch.len())
        .map(|s| {
            let x: Vec<f64> = (0..spec.input_dim())
                .map(|j| batch.features.get(s, j))
                .collect();
            let trace = forward_sample(spec, w, &x);
            let mut grad = w.zeros_like();

            // Output delta: softmax minus one-hot.
            let mut delta = softmax(trace.post.last().unwrap());
            delta[batch.labels[s]] -= 1.0;

            for l in (0..num_dense).rev() {
                let in_dim = spec.layer_sizes[l];
                let input: Vec<f64> = if l == 0 {
                    x.clone()
                } else {
                    trace.post[l - 1].clone()
                };
                {
                    let layers = grad.layers_mut();
                    let (_, gw) = &mut layers[2 * l];
                    for (o, d) in delta.iter().enumerate() {
                        for (j, xi) in input.iter().enumerate() {
                            gw[o * in_dim + j] = d * xi;
                        }
                    }
                    let (_, gb) = &mut layers[2 * l + 1];
                    gb.copy_from_slice(&delta);
                }
                if l > 0 {
                    let weights = w.layer_values(2 * l);
                    let prev_dim = spec.layer_sizes[l];
                    let mut next_delta = vec![0.0; prev_dim];
                    for (j, nd) in next_delta.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (o, d) in delta.iter().enumerate() {
                            acc += d * weights[o * prev_dim + j];
                        }
                        *nd = acc * spec.activation.derivative(trace.pre[l - 1][j]);
                    }
                    delta = next_delta;
                }
            }
            grad
        })
        .collect();
    pairwise_mean(&per_sample)
}

/// Gradient of the loss at the summed point `w + p`.
pub fn gradient_at_sum(
    spec: &ModelSpec,
    w: &ParamSet,
    p: &ParamSet,
    batch: &Batch,
) -> Result<ParamSet> {
    let point = w.add(p)?;
    gradient(spec, &point, batch)
}

/// Top-1 accuracy of the model at `w` (or `w + p` when given). Argmax ties
/// break toward the lowest class index.
pub fn evaluate(
    spec: &ModelSpec,
    w: &ParamSet,
    p: Option<&ParamSet>,
    test: &Batch,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let point = match p {
        Some(p) => {
            let sum = w.add(p)?;
            spec.check_params(&sum)?;
            sum
        }
        None => {
            spec.check_params(w)?;
            w.clone()
        }
    };
    check_labels(spec, test)?;
    let mut correct = 0usize;
    for s in 0..test.len() {
        let x: Vec<f64> = (0..spec.input_dim())
            .map(|j| test.features.get(s, j))
            .collect();
        let trace = forward_sample(spec, &point, &x);
        let logits = trace.post.last().unwrap();
        let mut best = 0usize;
        for (c, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = c;
            }
        }
        if best == test.labels[s] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_spec(dim: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            layer_sizes: vec![dim, classes],
            activation: Activation::Relu,
            num_classes: classes,
        }
    }

    #[test]
    fn zero_logits_give_log_c() {
        let spec = logistic_spec(3, 4);
        let w = ParamSet::zeros(&spec.param_shapes());
        let batch = Batch::new(
            Matrix::new(2, 3, vec![0.5, -1.0, 2.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![0, 3],
        )
        .unwrap();
        let l = loss(&spec, &w, &batch).unwrap();
        assert!((l - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_logits_give_zero_loss() {
        let spec = logistic_spec(2, 2);
        let mut w = ParamSet::zeros(&spec.param_shapes());
        // Large bias toward the true class of every sample.
        w.layers_mut()[1].1[0] = 60.0;
        let batch = Batch::new(Matrix::new(1, 2, vec![0.0, 0.0]).unwrap(), vec![0]).unwrap();
        assert!(loss(&spec, &w, &batch).unwrap() < 1e-8);
    }

    #[test]
    fn near_stationary_gradient_on_separated_fit() {
        let spec = logistic_spec(1, 2);
        let mut w = ParamSet::zeros(&spec.param_shapes());
        // Weight row 0 = +40, row 1 = -40: x = +1 is class 0, x = -1 class 1,
        // both with huge margin.
        w.layers_mut()[0].1[0] = 40.0;
        w.layers_mut()[0].1[1] = -40.0;
        let batch = Batch::new(
            Matrix::new(2, 1, vec![1.0, -1.0]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        let g = gradient(&spec, &w, &batch).unwrap();
        assert!(g.norm() < 1e-6, "gradient norm {}", g.norm());
    }

    #[test]
    fn gradient_at_sum_with_zero_p_is_bitwise_equal() {
        let spec = ModelSpec {
            layer_sizes: vec![3, 5, 2],
            activation: Activation::Tanh,
            num_classes: 2,
        };
        let w = spec.init_params(11);
        let p = w.zeros_like();
        let batch = Batch::new(
            Matrix::new(2, 3, vec![0.1, 0.2, -0.4, 1.0, -1.0, 0.5]).unwrap(),
            vec![1, 0],
        )
        .unwrap();
        let a = gradient(&spec, &w, &batch).unwrap();
        let b = gradient_at_sum(&spec, &w, &p, &batch).unwrap();
        for (x, y) in a.values().zip(b.values()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn gradient_at_sum_with_zero_w_matches_gradient_at_p() {
        let spec = logistic_spec(2, 3);
        let p = spec.init_params(4);
        let w = p.zeros_like();
        let batch = Batch::new(Matrix::new(1, 2, vec![0.3, -0.6]).unwrap(), vec![2]).unwrap();
        let a = gradient_at_sum(&spec, &w, &p, &batch).unwrap();
        let b = gradient(&spec, &p, &batch).unwrap();
        assert!(a.max_abs_diff(&b) == 0.0);
    }

    #[test]
    fn evaluate_tie_break_sends_zero_model_to_class_zero() {
        let spec = logistic_spec(2, 2);
        let w = ParamSet::zeros(&spec.param_shapes());
        let batch = Batch::new(
            Matrix::new(4, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.2, 0.2]).unwrap(),
            vec![0, 1, 0, 1],
        )
        .unwrap();
        // All logits are zero, ties resolve to class 0, half the labels are 0.
        assert_eq!(evaluate(&spec, &w, None, &batch).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_perfect_fit_is_one() {
        let spec = logistic_spec(1, 2);
        let mut w = ParamSet::zeros(&spec.param_shapes());
        w.layers_mut()[0].1[0] = 10.0;
        w.layers_mut()[0].1[1] = -10.0;
        let batch = Batch::new(Matrix::new(2, 1, vec![2.0, -2.0]).unwrap(), vec![0, 1]).unwrap();
        assert_eq!(evaluate(&spec, &w, None, &batch).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_invariant_to_constant_logit_shift() {
        let spec = ModelSpec {
            layer_sizes: vec![2, 4, 3],
            activation: Activation::Relu,
            num_classes: 3,
        };
        let w = spec.init_params(9);
        let batch = Batch::new(
            Matrix::new(3, 2, vec![0.5, 1.5, -0.5, 0.25, 2.0, -1.0]).unwrap(),
            vec![0, 1, 2],
        )
        .unwrap();
        let base = evaluate(&spec, &w, None, &batch).unwrap();
        let mut shifted = w.clone();
        // Last passthrough block is the output bias: shift all logits by 3.7.
        let last = shifted.num_layers() - 1;
        for v in shifted.layers_mut()[last].1.iter_mut() {
            *v += 3.7;
        }
        assert_eq!(evaluate(&spec, &shifted, None, &batch).unwrap(), base);
    }

    #[test]
    fn empty_test_set_is_rejected() {
        let spec = logistic_spec(2, 2);
        let w = ParamSet::zeros(&spec.param_shapes());
        let empty = Batch {
            features: Matrix::zeros(1, 2),
            labels: vec![],
        };
        assert!(evaluate(&spec, &w, None, &empty).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = logistic_spec(2, 2);
        let w = ParamSet::zeros(&[LayerKind::Passthrough { len: 3 }]);
        let batch = Batch::new(Matrix::new(1, 2, vec![0.0, 0.0]).unwrap(), vec![0]).unwrap();
        assert!(loss(&spec, &w, &batch).is_err());
        assert!(gradient(&spec, &w, &batch).is_err());
    }

    #[test]
    fn init_is_seeded_and_within_glorot_bound() {
        let spec = ModelSpec {
            layer_sizes: vec![4, 6, 3],
            activation: Activation::Relu,
            num_classes: 3,
        };
        let a = spec.init_params(5);
        let b = spec.init_params(5);
        assert_eq!(a, b);
        let bound0 = (6.0f64 / 10.0).sqrt();
        assert!(a.layer_values(0).iter().all(|v| v.abs() < bound0));
        // Biases start at zero.
        assert!(a.layer_values(1).iter().all(|&v| v == 0.0));
    }
}
