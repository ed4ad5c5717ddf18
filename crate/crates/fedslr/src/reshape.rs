//! Layer-to-matrix transformation, its inverse, and rank-r factorization of
//! low-rank layers into (U, V) pairs for downlink transmission.

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix, RANK_EPS};
use serde::{Deserialize, Serialize};

/// Shape descriptor for one parameter block of a model.
///
/// Conv and Dense blocks are regularized and reshaped into matrices; biases
/// and normalization parameters travel as Passthrough and are never
/// factorized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
    },
    Dense {
        out_features: usize,
        in_features: usize,
    },
    Passthrough {
        len: usize,
    },
}

impl LayerKind {
    pub fn element_count(&self) -> usize {
        match *self {
            LayerKind::Conv {
                out_channels,
                in_channels,
                kernel,
            } => out_channels * in_channels * kernel * kernel,
            LayerKind::Dense {
                out_features,
                in_features,
            } => out_features * in_features,
            LayerKind::Passthrough { len } => len,
        }
    }

    pub fn is_regularized(&self) -> bool {
        !matches!(self, LayerKind::Passthrough { .. })
    }

    /// Matrix shape under the layer-to-matrix map, if the layer has one.
    pub fn matrix_shape(&self) -> Option<(usize, usize)> {
        match *self {
            LayerKind::Conv {
                out_channels,
                in_channels,
                kernel,
            } => Some((out_channels * kernel, in_channels * kernel)),
            LayerKind::Dense {
                out_features,
                in_features,
            } => Some((out_features, in_features)),
            LayerKind::Passthrough { .. } => None,
        }
    }
}

/// Ordered, shape-tagged parameter container: the single representation for
/// global models, local models, auxiliary variables, and personalized
/// components.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layers: Vec<(LayerKind, Vec<f64>)>,
}

impl ParamSet {
    pub fn new(layers: Vec<(LayerKind, Vec<f64>)>) -> Result<Self> {
        for (i, (kind, values)) in layers.iter().enumerate() {
            if values.len() != kind.element_count() {
                return Err(Error::shape(format!(
                    "layer {i}: kind holds {} elements but {} values given",
                    kind.element_count(),
                    values.len()
                )));
            }
        }
        Ok(ParamSet { layers })
    }

    pub fn zeros(shapes: &[LayerKind]) -> Self {
        ParamSet {
            layers: shapes
                .iter()
                .map(|&k| (k, vec![0.0; k.element_count()]))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet::zeros(&self.shapes())
    }

    pub fn shapes(&self) -> Vec<LayerKind> {
        self.layers.iter().map(|(k, _)| *k).collect()
    }

    pub fn layers(&self) -> &[(LayerKind, Vec<f64>)] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [(LayerKind, Vec<f64>)] {
        &mut self.layers
    }

    pub fn layer_values(&self, idx: usize) -> &[f64] {
        &self.layers[idx].1
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn shape_compatible(&self, other: &ParamSet) -> bool {
        self.shapes() == other.shapes()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Flat iterator over every coordinate, layer by layer.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|(_, v)| v.iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|(_, v)| v.iter_mut())
    }

    fn require_compatible(&self, other: &ParamSet, op: &str) -> Result<()> {
        if !self.shape_compatible(other) {
            return Err(Error::shape(format!("{op} on shape-incompatible parameter sets")));
        }
        Ok(())
    }

    /// Coordinate-wise combination of two shape-compatible sets.
    pub fn zip_with(&self, other: &ParamSet, mut f: impl FnMut(f64, f64) -> f64) -> Result<ParamSet> {
        self.require_compatible(other, "zip_with")?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|((k, a), (_, b))| (*k, a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()))
            .collect();
        Ok(ParamSet { layers })
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ParamSet {
        let layers = self
            .layers
            .iter()
            .map(|(k, v)| (*k, v.iter().map(|&x| f(x)).collect()))
            .collect();
        ParamSet { layers }
    }

    pub fn add(&self, other: &ParamSet) -> Result<ParamSet> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamSet) -> Result<ParamSet> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> ParamSet {
        self.map(|x| x * factor)
    }

    pub fn add_assign(&mut self, other: &ParamSet) -> Result<()> {
        self.require_compatible(other, "add_assign")?;
        for ((_, a), (_, b)) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamSet) -> Result<f64> {
        self.require_compatible(other, "dot")?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().map(f64::abs).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Fraction of coordinates that are exactly zero.
    pub fn zero_fraction(&self) -> f64 {
        let total = self.total_len();
        if total == 0 {
            return 0.0;
        }
        let zeros = self.values().filter(|&v| v == 0.0).count();
        zeros as f64 / total as f64
    }
}

/// Pairwise (balanced-tree) mean of shape-compatible parameter sets.
///
/// The reduction order is fixed by index, so results do not depend on
/// scheduling, and sums of 2^k identical terms are exact.
pub fn pairwise_mean(sets: &[ParamSet]) -> Result<ParamSet> {
    if sets.is_empty() {
        return Err(Error::Protocol("mean of zero parameter sets".into()));
    }
    let sum = pairwise_sum_refs(&sets.iter().collect::<Vec<_>>())?;
    Ok(sum.scale(1.0 / sets.len() as f64))
}

pub fn pairwise_sum_refs(sets: &[&ParamSet]) -> Result<ParamSet> {
    match sets.len() {
        0 => Err(Error::Protocol("sum of zero parameter sets".into())),
        1 => Ok(sets[0].clone()),
        n => {
            let mid = n / 2;
            let left = pairwise_sum_refs(&sets[..mid])?;
            let right = pairwise_sum_refs(&sets[mid..])?;
            left.add(&right)
        }
    }
}

/// Reshapes a regularized layer's flat values into its matrix image.
pub fn to_matrix(layer: LayerKind, values: &[f64]) -> Result<Matrix> {
    let (rows, cols) = layer
        .matrix_shape()
        .ok_or_else(|| Error::invalid("passthrough layers have no matrix form"))?;
    if values.len() != layer.element_count() {
        return Err(Error::shape(format!(
            "layer holds {} elements but {} values given",
            layer.element_count(),
            values.len()
        )));
    }
    match layer {
        LayerKind::Dense { .. } => Matrix::new(rows, cols, values.to_vec()),
        LayerKind::Conv {
            in_channels,
            kernel,
            ..
        } => {
            // Tensor layout (oc, kr, ic, kc) maps to row = oc*kernel + kr,
            // col = ic*kernel + kc.
            let mut m = Matrix::zeros(rows, cols);
            let mut idx = 0;
            for oc in 0..rows / kernel {
                for kr in 0..kernel {
                    for ic in 0..in_channels {
                        for kc in 0..kernel {
                            m.set(oc * kernel + kr, ic * kernel + kc, values[idx]);
                            idx += 1;
                        }
                    }
                }
            }
            Ok(m)
        }
        LayerKind::Passthrough { .. } => unreachable!(),
    }
}

/// Exact inverse of [`to_matrix`].
pub fn from_matrix(layer: LayerKind, m: &Matrix) -> Result<Vec<f64>> {
    let (rows, cols) = layer
        .matrix_shape()
        .ok_or_else(|| Error::invalid("passthrough layers have no matrix form"))?;
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::shape(format!(
            "matrix {}x{} does not match layer image {}x{}",
            m.rows(),
            m.cols(),
            rows,
            cols
        )));
    }
    match layer {
        LayerKind::Dense { .. } => Ok(m.data().to_vec()),
        LayerKind::Conv {
            in_channels,
            kernel,
            ..
        } => {
            let mut values = Vec::with_capacity(layer.element_count());
            for oc in 0..rows / kernel {
                for kr in 0..kernel {
                    for ic in 0..in_channels {
                        for kc in 0..kernel {
                            values.push(m.get(oc * kernel + kr, ic * kernel + kc));
                        }
                    }
                }
            }
            Ok(values)
        }
        LayerKind::Passthrough { .. } => unreachable!(),
    }
}

/// One factorized entry of a model: a low-rank (U, V) pair for regularized
/// layers, or the raw values for passthrough layers.
#[derive(Debug, Clone)]
pub enum FactorizedLayer {
    LowRank {
        kind: LayerKind,
        rank: usize,
        /// `u` is d1 x r with the singular values absorbed, `v` is d2 x r
        /// orthonormal. Absent exactly when rank = 0.
        factors: Option<(Matrix, Matrix)>,
    },
    Passthrough { kind: LayerKind, values: Vec<f64> },
}

/// Per-layer factorization of a model for downlink transmission.
#[derive(Debug, Clone)]
pub struct FactorizedModel {
    pub layers: Vec<FactorizedLayer>,
}

impl FactorizedModel {
    /// Stored element count: sum of r*(d1+d2) over low-rank layers plus
    /// passthrough lengths.
    pub fn element_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                FactorizedLayer::LowRank { kind, rank, .. } => {
                    let (d1, d2) = kind.matrix_shape().expect("low-rank layer has matrix form");
                    rank * (d1 + d2)
                }
                FactorizedLayer::Passthrough { values, .. } => values.len(),
            })
            .sum()
    }

    /// Ranks of the regularized layers, in layer order.
    pub fn ranks(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                FactorizedLayer::LowRank { rank, .. } => Some(*rank),
                FactorizedLayer::Passthrough { .. } => None,
            })
            .collect()
    }

    /// Elements actually charged on the wire: factorized form per layer if it
    /// is smaller than dense, else dense.
    pub fn transmitted_element_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                FactorizedLayer::LowRank { kind, rank, .. } => {
                    let (d1, d2) = kind.matrix_shape().expect("low-rank layer has matrix form");
                    (rank * (d1 + d2)).min(d1 * d2)
                }
                FactorizedLayer::Passthrough { values, .. } => values.len(),
            })
            .sum()
    }
}

/// Factorizes every regularized layer by SVD, keeping singular values above
/// the rank floor; passthrough layers are copied verbatim.
pub fn factorize(w: &ParamSet) -> Result<FactorizedModel> {
    if !w.is_finite() {
        return Err(Error::invalid("non-finite parameters in factorize"));
    }
    let mut layers = Vec::with_capacity(w.num_layers());
    for (kind, values) in w.layers() {
        if !kind.is_regularized() {
            layers.push(FactorizedLayer::Passthrough {
                kind: *kind,
                values: values.clone(),
            });
            continue;
        }
        let m = to_matrix(*kind, values)?;
        let s = svd(&m)?;
        let rank = s.rank(RANK_EPS);
        let factors = if rank == 0 {
            None
        } else {
            let u = Matrix::from_fn(m.rows(), rank, |i, j| s.u.get(i, j) * s.sigma[j]);
            let v = Matrix::from_fn(m.cols(), rank, |i, j| s.vt.get(j, i));
            Some((u, v))
        };
        layers.push(FactorizedLayer::LowRank {
            kind: *kind,
            rank,
            factors,
        });
    }
    Ok(FactorizedModel { layers })
}

/// Rebuilds the dense parameter set from a factorized model.
pub fn reconstruct(f: &FactorizedModel, shapes: &[LayerKind]) -> Result<ParamSet> {
    if f.layers.len() != shapes.len() {
        return Err(Error::shape(format!(
            "factorized model has {} layers, expected {}",
            f.layers.len(),
            shapes.len()
        )));
    }
    let mut layers = Vec::with_capacity(shapes.len());
    for (entry, &shape) in f.layers.iter().zip(shapes) {
        match entry {
            FactorizedLayer::Passthrough { kind, values } => {
                if *kind != shape {
                    return Err(Error::shape("passthrough layer kind mismatch"));
                }
                layers.push((shape, values.clone()));
            }
            FactorizedLayer::LowRank { kind, factors, .. } => {
                if *kind != shape {
                    return Err(Error::shape("low-rank layer kind mismatch"));
                }
                let (rows, cols) = shape.matrix_shape().expect("regularized layer");
                let m = match factors {
                    None => Matrix::zeros(rows, cols),
                    Some((u, v)) => u.matmul(&v.transpose())?,
                };
                layers.push((shape, from_matrix(shape, &m)?));
            }
        }
    }
    ParamSet::new(layers)
}
