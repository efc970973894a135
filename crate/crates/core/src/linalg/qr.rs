//! Householder QR for tall complex matrices.
//!
//! The thin factors are normalized so that `R` has a real, nonnegative
//! diagonal. This pins down the otherwise arbitrary column phases of `Q`
//! and keeps runs reproducible.

use super::matrix::{dot, norm, ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// Thin QR factors of an `n x r` matrix.
#[derive(Clone, Debug)]
pub struct ThinQr {
    pub q: ComplexMatrix,
    pub r: ComplexMatrix,
}

impl ThinQr {
    /// Smallest absolute diagonal entry of `R` together with its index.
    pub fn min_diagonal(&self) -> (usize, f64) {
        (0..self.r.cols())
            .map(|i| (i, self.r[(i, i)].norm()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.r.cols())
            .map(|i| self.r[(i, i)].norm())
            .fold(0.0, f64::max)
    }

    /// Solves `min ‖M b − y‖` given `M = QR` with invertible `R`.
    pub fn solve_least_squares(&self, y: &[C64]) -> Vec<C64> {
        let qty = self.q.adjoint_mul_vec(y);
        back_substitute(&self.r, &qty)
    }
}

/// Thin Householder QR. Never fails; rank checks are the caller's business.
pub fn householder_qr(m: &ComplexMatrix) -> ThinQr {
    let (n, r) = m.shape();
    assert!(n >= r, "householder_qr needs rows >= cols ({n} < {r})");
    let mut a = m.clone();
    let mut reflectors: Vec<Vec<C64>> = Vec::with_capacity(r);
    let mut rmat = ComplexMatrix::zeros(r, r);

    for j in 0..r {
        let x: Vec<C64> = a.col(j)[j..].to_vec();
        let xnorm = norm(&x);
        if xnorm == 0.0 {
            reflectors.push(Vec::new());
            for c in j..r {
                rmat[(j, c)] = a[(j, c)];
            }
            continue;
        }
        let phase = if x[0].norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x[0] / x[0].norm()
        };
        let alpha = -phase * xnorm;
        let mut v = x;
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
        } else {
            for c in j..r {
                let col = &mut a.col_mut(c)[j..];
                let w = dot(&v, col) * (2.0 / vnorm2);
                for (ci, vi) in col.iter_mut().zip(&v) {
                    *ci -= w * vi;
                }
            }
            reflectors.push(v);
        }
        for c in j..r {
            rmat[(j, c)] = a[(j, c)];
        }
    }

    // Q = H_0 H_1 ... H_{r-1} applied to the first r identity columns.
    let mut q = ComplexMatrix::eye(n, r);
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        for c in 0..r {
            let col = &mut q.col_mut(c)[j..];
            let w = dot(v, col) * (2.0 / vnorm2);
            for (ci, vi) in col.iter_mut().zip(v) {
                *ci -= w * vi;
            }
        }
    }

    for j in 0..r {
        let d = rmat[(j, j)];
        let mag = d.norm();
        if mag == 0.0 {
            continue;
        }
        let phase = d / mag;
        for c in j..r {
            rmat[(j, c)] *= phase.conj();
        }
        rmat[(j, j)] = C64::new(mag, 0.0);
        q.col_mut(j).iter_mut().for_each(|z| *z *= phase);
    }
    ThinQr { q, r: rmat }
}

/// Orthonormalizes the columns of `m` (`n x r`, `n ≥ r ≥ 1`).
///
/// Returns `RankDeficient` when some diagonal entry of `R` falls below
/// `1e-12 · ‖M‖_F`.
pub fn qr_orthonormalize(m: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (n, r) = m.shape();
    if r == 0 || n < r {
        return Err(Error::DimensionMismatch(format!(
            "qr_orthonormalize needs n >= r >= 1, got {n}x{r}"
        )));
    }
    let qr = householder_qr(m);
    let threshold = 1e-12 * m.frobenius_norm();
    let (index, value) = qr.min_diagonal();
    if value <= threshold {
        return Err(Error::RankDeficient { index, value });
    }
    Ok((qr.q, qr.r))
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn back_substitute(r: &ComplexMatrix, b: &[C64]) -> Vec<C64> {
    let k = r.cols();
    let mut x = vec![ZERO; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}
