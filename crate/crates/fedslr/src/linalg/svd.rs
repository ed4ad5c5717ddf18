//! Deterministic singular value decomposition.
//!
//! Householder bidiagonalization followed by Golub-Kahan implicit-shift QR.
//! A fixed sign convention (largest-magnitude entry of each left singular
//! vector nonnegative, ties broken by lowest index) makes the factorization
//! reproducible byte-for-byte across calls.

use super::Matrix;
use crate::error::{Error, Result};

/// Thin SVD: `u` is rows x k, `sigma` has length k (descending, nonnegative),
/// `vt` is k x cols, with k = min(rows, cols).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// Number of singular values strictly above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.sigma.iter().filter(|&&s| s > tol).count()
    }

    /// U * diag(sigma) * Vt.
    pub fn reconstruct(&self) -> Matrix {
        self.u
            .scale_cols(&self.sigma)
            .and_then(|us| us.matmul(&self.vt))
            .expect("factor shapes are consistent by construction")
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::invalid("non-finite input to svd"));
    }
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        // A = (A^T)^T: swap the roles of the singular vector factors.
        let t = svd_tall(&m.transpose())?;
        Ok(apply_sign_convention(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        }))
    }
}

/// Core decomposition for rows >= cols.
fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let m = a.rows();
    let n = a.cols();

    let mut work = a.clone();
    let mut u = Matrix::identity(m);
    let mut v = Matrix::identity(n);
    let mut diag = vec![0.0; n];
    let mut superdiag = vec![0.0; n.saturating_sub(1)];

    bidiagonalize(&mut work, &mut u, &mut v, &mut diag, &mut superdiag);
    bidiagonal_qr(&mut diag, &mut superdiag, &mut u, &mut v, 60 * (m.max(n)))?;

    // Thin slices: first n columns of U, V transposed.
    let u_thin = Matrix::from_fn(m, n, |i, j| u.get(i, j));
    let vt = v.transpose();

    Ok(apply_sign_convention(SvdResult {
        u: u_thin,
        sigma: diag,
        vt,
    }))
}

/// LAPACK-style Householder reflector generation. On input `x` holds the
/// vector to annihilate; on output `x[0] = 1` and `x[1..]` hold the reflector
/// tail. Returns `(tau, beta)` with (I - tau v v^T) x_in = beta e1.
fn make_householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail_sq: f64 = x[1..].iter().map(|&v| v * v).sum();
    if tail_sq == 0.0 {
        x[0] = 1.0;
        return (0.0, alpha);
    }
    let norm = (alpha * alpha + tail_sq).sqrt();
    let beta = if alpha <= 0.0 { norm } else { -norm };
    let v0 = alpha - beta;
    for e in x[1..].iter_mut() {
        *e /= v0;
    }
    x[0] = 1.0;
    (-v0 / beta, beta)
}

/// Reduce `a` (m x n, m >= n) to upper bidiagonal form, accumulating the
/// orthogonal transforms into `u` (m x m) and `v` (n x n) so that
/// a = u * B * v^T with B = bidiag(diag, superdiag).
fn bidiagonalize(
    a: &mut Matrix,
    u: &mut Matrix,
    v: &mut Matrix,
    diag: &mut [f64],
    superdiag: &mut [f64],
) {
    let m = a.rows();
    let n = a.cols();
    let mut house = vec![0.0; m.max(n)];

    for k in 0..n {
        // Left reflector: zero a[k+1.., k].
        let len = m - k;
        for (r, slot) in house[..len].iter_mut().enumerate() {
            *slot = a.get(k + r, k);
        }
        let (tau, beta) = make_householder(&mut house[..len]);
        diag[k] = beta;
        if tau != 0.0 {
            // Apply to trailing columns of the work matrix.
            for j in (k + 1)..n {
                let mut dot = 0.0;
                for r in 0..len {
                    dot += house[r] * a.get(k + r, j);
                }
                dot *= tau;
                for r in 0..len {
                    let cur = a.get(k + r, j);
                    a.set(k + r, j, cur - dot * house[r]);
                }
            }
            // Accumulate U := U * H.
            for row in 0..m {
                let mut dot = 0.0;
                for r in 0..len {
                    dot += u.get(row, k + r) * house[r];
                }
                dot *= tau;
                for r in 0..len {
                    let cur = u.get(row, k + r);
                    u.set(row, k + r, cur - dot * house[r]);
                }
            }
        }

        // Right reflector: zero a[k, k+2..].
        let right = n - k - 1;
        if right >= 2 {
            for (c, slot) in house[..right].iter_mut().enumerate() {
                *slot = a.get(k, k + 1 + c);
            }
            let (tau, beta) = make_householder(&mut house[..right]);
            superdiag[k] = beta;
            if tau != 0.0 {
                for i in (k + 1)..m {
                    let mut dot = 0.0;
                    for c in 0..right {
                        dot += a.get(i, k + 1 + c) * house[c];
                    }
                    dot *= tau;
                    for c in 0..right {
                        let cur = a.get(i, k + 1 + c);
                        a.set(i, k + 1 + c, cur - dot * house[c]);
                    }
                }
                // Accumulate V := V * H.
                for row in 0..n {
                    let mut dot = 0.0;
                    for c in 0..right {
                        dot += v.get(row, k + 1 + c) * house[c];
                    }
                    dot *= tau;
                    for c in 0..right {
                        let cur = v.get(row, k + 1 + c);
                        v.set(row, k + 1 + c, cur - dot * house[c]);
                    }
                }
            }
        } else if right == 1 {
            superdiag[k] = a.get(k, k + 1);
        }
    }
}

/// Stable Givens rotation: returns (c, s) with c*a + s*b = r >= 0 (up to sign
/// of the hypotenuse) and -s*a + c*b = 0.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0);
    }
    if a == 0.0 {
        return (0.0, 1.0);
    }
    let r = a.hypot(b);
    (a / r, b / r)
}

fn rotate_cols(x: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for row in 0..x.rows() {
        let xp = x.get(row, p);
        let xq = x.get(row, q);
        x.set(row, p, c * xp + s * xq);
        x.set(row, q, c * xq - s * xp);
    }
}

/// Implicit-shift QR on the bidiagonal (diag, superdiag), accumulating the
/// rotations into the columns of `u` and `v`. On return `diag` holds the
/// singular values, nonnegative and sorted descending, and `superdiag` is
/// annihilated.
fn bidiagonal_qr(
    diag: &mut [f64],
    superdiag: &mut [f64],
    u: &mut Matrix,
    v: &mut Matrix,
    max_iter: usize,
) -> Result<()> {
    let n = diag.len();
    let eps = f64::EPSILON;

    if n > 1 {
        let mut hi = n - 1;
        let mut iter = 0usize;
        while hi > 0 {
            // Deflate a negligible trailing superdiagonal entry.
            let thresh = eps * (diag[hi - 1].abs() + diag[hi].abs());
            if superdiag[hi - 1].abs() <= thresh {
                superdiag[hi - 1] = 0.0;
                hi -= 1;
                continue;
            }

            // Locate the start of the unreduced block ending at hi.
            let mut lo = hi - 1;
            while lo > 0 {
                let t = eps * (diag[lo - 1].abs() + diag[lo].abs());
                if superdiag[lo - 1].abs() <= t {
                    superdiag[lo - 1] = 0.0;
                    break;
                }
                lo -= 1;
            }

            iter += 1;
            if iter > max_iter {
                return Err(Error::NoConvergence(
                    "bidiagonal QR iteration budget exhausted".into(),
                ));
            }

            // A vanishing diagonal entry breaks the shift; chase the adjacent
            // superdiagonal off the bottom with left rotations instead.
            let block_scale = (lo..=hi)
                .map(|i| diag[i].abs())
                .chain((lo..hi).map(|i| superdiag[i].abs()))
                .fold(0.0, f64::max);
            let mut chased = false;
            for idx in lo..hi {
                if diag[idx].abs() <= eps * block_scale {
                    diag[idx] = 0.0;
                    let mut z = superdiag[idx];
                    superdiag[idx] = 0.0;
                    for j in (idx + 1)..=hi {
                        let (c, s) = givens(diag[j], z);
                        diag[j] = c * diag[j] + s * z;
                        if j < hi {
                            z = -s * superdiag[j];
                            superdiag[j] *= c;
                        }
                        // Left rotation mixes U columns (j, idx).
                        for row in 0..u.rows() {
                            let uj = u.get(row, j);
                            let ui = u.get(row, idx);
                            u.set(row, j, c * uj + s * ui);
                            u.set(row, idx, c * ui - s * uj);
                        }
                    }
                    chased = true;
                    break;
                }
            }
            if chased {
                continue;
            }

            // Wilkinson shift from the trailing 2x2 of B^T B.
            let d_hi = diag[hi];
            let d_hi1 = diag[hi - 1];
            let e_hi1 = superdiag[hi - 1];
            let e_hi2 = if hi >= 2 && hi - 2 >= lo {
                superdiag[hi - 2]
            } else {
                0.0
            };
            let t11 = d_hi1 * d_hi1 + e_hi2 * e_hi2;
            let t12 = d_hi1 * e_hi1;
            let t22 = d_hi * d_hi + e_hi1 * e_hi1;
            let d = (t11 - t22) / 2.0;
            let denom = d + d.signum() * (d * d + t12 * t12).sqrt();
            let mu = if denom == 0.0 { t22 } else { t22 - t12 * t12 / denom };

            // Bulge chase.
            let mut x = diag[lo] * diag[lo] - mu;
            let mut z = diag[lo] * superdiag[lo];
            for k in lo..hi {
                let (c, s) = givens(x, z);
                if k > lo {
                    superdiag[k - 1] = c * x + s * z;
                }
                let dk = diag[k];
                let ek = superdiag[k];
                let dk1 = diag[k + 1];
                diag[k] = c * dk + s * ek;
                superdiag[k] = c * ek - s * dk;
                let bulge = s * dk1;
                diag[k + 1] = c * dk1;
                rotate_cols(v, k, k + 1, c, s);

                let (c2, s2) = givens(diag[k], bulge);
                diag[k] = c2 * diag[k] + s2 * bulge;
                let old_ek = superdiag[k];
                let old_dk1 = diag[k + 1];
                superdiag[k] = c2 * old_ek + s2 * old_dk1;
                diag[k + 1] = c2 * old_dk1 - s2 * old_ek;
                if k + 1 < hi {
                    let old_ek1 = superdiag[k + 1];
                    x = superdiag[k];
                    z = s2 * old_ek1;
                    superdiag[k + 1] = c2 * old_ek1;
                }
                rotate_cols(u, k, k + 1, c2, s2);
            }
        }
    }

    // Flip negative singular values into the U columns.
    for i in 0..n {
        if diag[i] < 0.0 {
            diag[i] = -diag[i];
            for row in 0..u.rows() {
                let val = u.get(row, i);
                u.set(row, i, -val);
            }
        }
    }

    // Selection sort descending, permuting U and V columns along.
    for i in 0..n {
        let mut max_idx = i;
        for j in (i + 1)..n {
            if diag[j] > diag[max_idx] {
                max_idx = j;
            }
        }
        if max_idx != i {
            diag.swap(i, max_idx);
            for row in 0..u.rows() {
                let tmp = u.get(row, i);
                u.set(row, i, u.get(row, max_idx));
                u.set(row, max_idx, tmp);
            }
            for row in 0..v.rows() {
                let tmp = v.get(row, i);
                v.set(row, i, v.get(row, max_idx));
                v.set(row, max_idx, tmp);
            }
        }
    }
    Ok(())
}

/// Largest-magnitude entry of each U column made nonnegative; ties broken by
/// lowest row index. The compensating sign flip lands on the matching Vt row.
fn apply_sign_convention(mut s: SvdResult) -> SvdResult {
    let k = s.sigma.len();
    for j in 0..k {
        let mut best_row = 0;
        let mut best_mag = -1.0;
        for i in 0..s.u.rows() {
            let mag = s.u.get(i, j).abs();
            if mag > best_mag {
                best_mag = mag;
                best_row = i;
            }
        }
        if s.u.get(best_row, j) < 0.0 {
            for i in 0..s.u.rows() {
                let val = s.u.get(i, j);
                s.u.set(i, j, -val);
            }
            for c in 0..s.vt.cols() {
                let val = s.vt.get(j, c);
                s.vt.set(j, c, -val);
            }
        }
    }
    s
}
