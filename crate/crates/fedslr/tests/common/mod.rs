//! Independent oracles used by the integration and acceptance suites.
//!
//! Everything here is implemented without touching the library's own
//! decomposition or shrinkage paths, so it can serve as a second route
//! for cross-checking results.

#![allow(dead_code)]

use fedslr::linalg::Matrix;

/// One-sided Jacobi SVD. Returns (u, sigma, vt) with sigma descending.
///
/// Deliberately a different algorithm from the library SVD so the two can
/// cross-validate each other.
pub fn jacobi_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    if a.rows() >= a.cols() {
        jacobi_svd_tall(a)
    } else {
        let (u, sigma, vt) = jacobi_svd_tall(&a.transpose());
        (vt.transpose(), sigma, u.transpose())
    }
}

pub fn jacobi_singular_values(a: &Matrix) -> Vec<f64> {
    jacobi_svd(a).1
}

/// Nuclear norm through the Jacobi route.
pub fn nuclear_norm_oracle(a: &Matrix) -> f64 {
    jacobi_singular_values(a).iter().sum()
}

fn jacobi_svd_tall(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let m = a.rows();
    let n = a.cols();
    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let tol = 1e-15;

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for r in 0..m {
                    let wp = w.get(r, p);
                    let wq = w.get(r, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if apq.abs() <= tol * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let wp = w.get(r, p);
                    let wq = w.get(r, q);
                    w.set(r, p, c * wp - s * wq);
                    w.set(r, q, s * wp + c * wq);
                }
                for r in 0..n {
                    let vp = v.get(r, p);
                    let vq = v.get(r, q);
                    v.set(r, p, c * vp - s * vq);
                    v.set(r, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|r| w.get(r, j).powi(2)).sum::<f64>().sqrt())
        .collect();

    // Sort descending, permuting the factor columns along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let sorted_sigma: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let mut u = Matrix::zeros(m, n);
    let mut v_sorted = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        let s = sigma[old_j];
        for r in 0..m {
            let val = if s > 1e-300 { w.get(r, old_j) / s } else { 0.0 };
            u.set(r, new_j, val);
        }
        for r in 0..n {
            v_sorted.set(r, new_j, v.get(r, old_j));
        }
    }
    sigma = sorted_sigma;
    (u, sigma, v_sorted.transpose())
}

/// Minimizes 0.5 (z - x)^2 + tau |z| by multi-resolution 1-D grid search.
pub fn lasso_grid_1d(x: f64, tau: f64) -> f64 {
    let objective = |z: f64| 0.5 * (z - x) * (z - x) + tau * z.abs();
    let mut center = 0.0;
    let mut span = x.abs() + tau + 1.0;
    let mut best = 0.0;
    for _level in 0..7 {
        let points = 2000usize;
        let step = 2.0 * span / points as f64;
        let mut best_val = f64::INFINITY;
        for k in 0..=points {
            let z = center - span + k as f64 * step;
            let val = objective(z);
            if val < best_val {
                best_val = val;
                best = z;
            }
        }
        center = best;
        span = 2.0 * step;
    }
    best
}

/// Central finite-difference partial derivative of `f` at `point[idx]`.
pub fn central_diff(
    f: &mut dyn FnMut(&[f64]) -> f64,
    point: &[f64],
    idx: usize,
    h: f64,
) -> f64 {
    let mut plus = point.to_vec();
    let mut minus = point.to_vec();
    plus[idx] += h;
    minus[idx] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Largest-remainder apportionment of `total` into parts proportional to
/// `weights`; ties broken by lowest index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        let mut out = vec![0; weights.len()];
        if !out.is_empty() {
            out[0] = total;
        }
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut remainders: Vec<(usize, f64)> = quotas
        .iter()
        .enumerate()
        .map(|(i, q)| (i, q - q.floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(total - assigned) {
        counts[remainders[k % remainders.len()].0] += 1;
    }
    counts
}

/// Deterministic pseudo-random matrix for seeded test fixtures.
pub fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    Matrix::from_fn(rows, cols, |_, _| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let bits = (state >> 11) as f64 / (1u64 << 53) as f64;
        2.0 * bits - 1.0
    })
}

pub fn seeded_vector(len: usize, seed: u64) -> Vec<f64> {
    seeded_matrix(1, len, seed).into_data()
}
