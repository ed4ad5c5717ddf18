//! Dense matrix kernels, deterministic SVD, and closed-form proximal operators.

mod svd;

pub use svd::{svd, SvdResult};

use crate::error::{Error, Result};

/// Singular values (or shrunk singular values) below this magnitude are
/// treated as exactly zero when counting rank.
pub const RANK_EPS: f64 = 1e-12;

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Scales column `j` by `factors[j]`.
    pub fn scale_cols(&self, factors: &[f64]) -> Result<Matrix> {
        if factors.len() != self.cols {
            return Err(Error::shape(format!(
                "expected {} column factors, got {}",
                self.cols,
                factors.len()
            )));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[i * self.cols + j] *= factors[j];
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::shape(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Balanced-tree sum with a fixed reduction order: independent of chunking
/// or scheduling, and exact for 2^k identical addends.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Coordinate-wise shrinkage toward zero by `a`, zeroing magnitudes <= `a`.
pub fn soft_threshold(x: &[f64], a: f64) -> Result<Vec<f64>> {
    if !(a >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {a}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to soft_threshold"));
    }
    Ok(x.iter()
        .map(|&v| {
            if v > a {
                v - a
            } else if v < -a {
                v + a
            } else {
                0.0
            }
        })
        .collect())
}

/// Proximal operator of `tau * ||.||_1`: identical to soft thresholding.
pub fn prox_l1(x: &[f64], tau: f64) -> Result<Vec<f64>> {
    soft_threshold(x, tau)
}

/// Proximal operator of `tau * ||.||_*` (singular-value soft thresholding).
///
/// Returns the shrunk matrix together with the number of singular values
/// that survive the shrinkage.
pub fn prox_nuclear(m: &Matrix, tau: f64) -> Result<(Matrix, usize)> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("nuclear threshold must be >= 0, got {tau}")));
    }
    let decomp = svd(m)?;
    if tau == 0.0 {
        // Identity at zero threshold; rank read off the spectrum.
        let rank = decomp.sigma.iter().filter(|&&s| s > RANK_EPS).count();
        return Ok((m.clone(), rank));
    }
    let mut shrunk = soft_threshold(&decomp.sigma, tau)?;
    for s in shrunk.iter_mut() {
        if *s < RANK_EPS {
            *s = 0.0;
        }
    }
    let rank = shrunk.iter().filter(|&&s| s > 0.0).count();
    if rank == 0 {
        return Ok((Matrix::zeros(m.rows(), m.cols()), 0));
    }
    let out = decomp.u.scale_cols(&shrunk)?.matmul(&decomp.vt)?;
    Ok((out, rank))
}
