//! Truncated SVD of complex matrices.
//!
//! Small problems (`min(n, q) ≤ 128`) go through a one-sided Jacobi SVD,
//! which is accurate to working precision. Larger ones use a seeded
//! randomized range finder with subspace (power) iterations, then finish
//! with Jacobi on the small projected matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::{dot, norm, ComplexMatrix, C64, ZERO};
use super::qr::householder_qr;
use crate::error::{Error, Result};

/// Above this `min(n, q)` the randomized path is used.
pub const FULL_SVD_LIMIT: usize = 128;
pub const OVERSAMPLING: usize = 10;
pub const POWER_ITERATIONS: usize = 2;

const JACOBI_MAX_SWEEPS: usize = 80;

/// Leading singular triplets: `M ≈ U diag(s) Vᴴ`.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.col_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        us.matmul(&self.v.conj_transpose())
    }
}

/// Top-`r` singular triplets of `m`.
pub fn truncated_svd(m: &ComplexMatrix, r: usize, seed: u64) -> Result<TruncatedSvd> {
    let (n, q) = m.shape();
    let k = n.min(q);
    if r == 0 || r > k {
        return Err(Error::DimensionMismatch(format!(
            "truncated_svd rank {r} outside [1, {k}] for a {n}x{q} matrix"
        )));
    }
    let full = if k <= FULL_SVD_LIMIT {
        full_svd(m)
    } else {
        randomized_svd(m, r, seed)
    };
    Ok(truncate(full, r))
}

/// Complete thin SVD (`min(n, q)` triplets), singular values non-increasing.
pub fn full_svd(m: &ComplexMatrix) -> TruncatedSvd {
    let (n, q) = m.shape();
    if n >= q {
        tall_svd(m)
    } else {
        let t = tall_svd(&m.conj_transpose());
        TruncatedSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

fn truncate(svd: TruncatedSvd, r: usize) -> TruncatedSvd {
    TruncatedSvd {
        u: svd.u.col_range(0, r),
        s: svd.s[..r].to_vec(),
        v: svd.v.col_range(0, r),
    }
}

fn tall_svd(m: &ComplexMatrix) -> TruncatedSvd {
    let (n, q) = m.shape();
    if q == 0 {
        return TruncatedSvd {
            u: ComplexMatrix::zeros(n, 0),
            s: Vec::new(),
            v: ComplexMatrix::zeros(0, 0),
        };
    }
    // Compress very tall inputs to their q x q triangular factor first.
    if n >= 2 * q {
        let qr = householder_qr(m);
        let inner = jacobi_svd(&qr.r);
        let u = qr.q.matmul(&inner.u);
        return TruncatedSvd {
            u,
            s: inner.s,
            v: inner.v,
        };
    }
    jacobi_svd(m)
}

/// One-sided (Hestenes) Jacobi SVD for `n ≥ q`.
fn jacobi_svd(m: &ComplexMatrix) -> TruncatedSvd {
    let (n, q) = m.shape();
    let mut a = m.clone();
    let mut v = ComplexMatrix::identity(q);
    let eps = 1e-15;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in i + 1..q {
                let alpha: f64 = a.col(i).iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = a.col(j).iter().map(|z| z.norm_sqr()).sum();
                let gamma = dot(a.col(i), a.col(j));
                let g = gamma.norm();
                if g == 0.0 || g <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, i, j, phase, c, s);
                rotate_columns(&mut v, i, j, phase, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = (0..q).map(|j| (j, norm(a.col(j)))).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let mut u = ComplexMatrix::zeros(n, q);
    let mut vs = ComplexMatrix::zeros(q, q);
    let mut s = Vec::with_capacity(q);
    let scale = order.first().map_or(0.0, |o| o.1);
    let mut deficient = Vec::new();
    for (dst, &(src, sigma)) in order.iter().enumerate() {
        s.push(sigma);
        vs.set_col(dst, v.col(src));
        if sigma > 1e-300 && sigma > scale * 1e-15 {
            let col: Vec<C64> = a.col(src).iter().map(|z| z / sigma).collect();
            u.set_col(dst, &col);
        } else {
            deficient.push(dst);
        }
    }
    complete_basis(&mut u, &deficient);
    TruncatedSvd { u, s, v: vs }
}

/// Applies the complex Jacobi rotation to columns `i` and `j`.
fn rotate_columns(a: &mut ComplexMatrix, i: usize, j: usize, phase: C64, c: f64, s: f64) {
    let rows = a.rows();
    let conj_phase = phase.conj();
    let data = a.as_mut_slice();
    let (lo, hi) = data.split_at_mut(j * rows);
    let ci = &mut lo[i * rows..(i + 1) * rows];
    let cj = &mut hi[..rows];
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let yj = *y * conj_phase;
        let xi = *x;
        *x = xi * c - yj * s;
        *y = xi * s + yj * c;
    }
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to the rest.
fn complete_basis(u: &mut ComplexMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    let mut candidate = 0usize;
    for &dst in missing {
        while candidate < n {
            let mut e = vec![ZERO; n];
            e[candidate] = C64::new(1.0, 0.0);
            candidate += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let c = dot(u.col(j), &e);
                    for (ei, ui) in e.iter_mut().zip(u.col(j)) {
                        *ei -= c * ui;
                    }
                }
            }
            let ne = norm(&e);
            if ne > 1e-8 {
                e.iter_mut().for_each(|z| *z /= ne);
                u.set_col(dst, &e);
                filled.push(dst);
                break;
            }
        }
    }
}

fn orthonormal_range(m: &ComplexMatrix) -> ComplexMatrix {
    householder_qr(m).q
}

fn randomized_svd(m: &ComplexMatrix, r: usize, seed: u64) -> TruncatedSvd {
    let (n, q) = m.shape();
    let k = (r + OVERSAMPLING).min(n.min(q));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = ComplexMatrix::random_complex_normal(q, k, &mut rng);
    let mut basis = orthonormal_range(&m.matmul(&omega));
    for _ in 0..POWER_ITERATIONS {
        let z = orthonormal_range(&m.adjoint_matmul(&basis));
        basis = orthonormal_range(&m.matmul(&z));
    }
    // B = Qᴴ M is k x q; its SVD lifts back through Q.
    let b = basis.adjoint_matmul(m);
    let small = full_svd(&b);
    TruncatedSvd {
        u: basis.matmul(&small.u),
        s: small.s,
        v: small.v,
    }
}

/// Spectral norm via exact SVD for small matrices, seeded power iteration otherwise.
pub fn spectral_norm(m: &ComplexMatrix, seed: u64) -> f64 {
    const EXACT_LIMIT: usize = 10_000;
    const POWER_STEPS: usize = 30;
    let (n, r) = m.shape();
    if n == 0 || r == 0 {
        return 0.0;
    }
    if n * r <= EXACT_LIMIT {
        return full_svd(m).s[0];
    }
    // Power iteration on the small Gram matrix side.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = ComplexMatrix::random_complex_normal(r, 1, &mut rng).into_vec();
    let mut estimate = 0.0;
    for _ in 0..POWER_STEPS {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|z| *z /= nx);
        let mx = m.mul_vec(&x);
        estimate = norm(&mx);
        x = m.adjoint_mul_vec(&mx);
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::subspace::subspace_distance;

    #[test]
    fn diagonal_matrix_singular_values() {
        let mut m = ComplexMatrix::zeros(5, 3);
        m[(0, 0)] = C64::new(3.0, 0.0);
        m[(1, 1)] = C64::new(2.0, 0.0);
        m[(2, 2)] = C64::new(1.0, 0.0);
        let svd = truncated_svd(&m, 2, 0).unwrap();
        assert!((svd.s[0] - 3.0).abs() < 1e-14);
        assert!((svd.s[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = ComplexMatrix::random_complex_normal(7, 1, &mut rng);
        let v = ComplexMatrix::random_complex_normal(4, 1, &mut rng);
        let m = u.matmul(&v.conj_transpose());
        let svd = truncated_svd(&m, 1, 0).unwrap();
        let want = u.frobenius_norm() * v.frobenius_norm();
        assert!((svd.s[0] - want).abs() < 1e-12 * want);
    }

    #[test]
    fn full_rank_reconstructs_and_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(n, q) in &[(12, 5), (5, 12), (9, 9), (30, 7)] {
            let m = ComplexMatrix::random_complex_normal(n, q, &mut rng);
            let svd = truncated_svd(&m, n.min(q), 0).unwrap();
            assert!(svd.reconstruct().sub(&m).frobenius_norm() < 1e-8 * m.frobenius_norm());
            assert!(svd.u.orthonormality_defect() < 1e-8);
            assert!(svd.v.orthonormality_defect() < 1e-8);
            assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_input_still_gives_orthonormal_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = ComplexMatrix::random_complex_normal(8, 2, &mut rng);
        let b = ComplexMatrix::random_complex_normal(2, 5, &mut rng);
        let m = a.matmul(&b);
        let svd = truncated_svd(&m, 4, 0).unwrap();
        assert!(svd.u.orthonormality_defect() < 1e-8);
        assert!(svd.s[2] < 1e-12 * svd.s[0]);
    }

    #[test]
    fn randomized_path_recovers_low_rank_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (u, _) = crate::linalg::qr::qr_orthonormalize(&ComplexMatrix::random_complex_normal(
            300, 4, &mut rng,
        ))
        .unwrap();
        let b = ComplexMatrix::random_complex_normal(4, 200, &mut rng);
        let m = u.matmul(&b);
        let svd = truncated_svd(&m, 4, 77).unwrap();
        assert!(subspace_distance(&svd.u, &u).unwrap() < 1e-8);
        assert!(svd.reconstruct().sub(&m).frobenius_norm() < 1e-8 * m.frobenius_norm());
        let again = truncated_svd(&m, 4, 77).unwrap();
        assert_eq!(svd.s, again.s);
    }

    #[test]
    fn spectral_norm_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut m = ComplexMatrix::random_complex_normal(5000, 3, &mut rng);
        for j in 0..3 {
            let w = (3 - j) as f64;
            m.col_mut(j).iter_mut().for_each(|z| *z *= w);
        }
        let exact = full_svd(&m).s[0];
        let power = spectral_norm(&m, 1);
        assert!((exact - power).abs() < 1e-6 * exact);
    }

    #[test]
    fn rejects_bad_rank() {
        let m = ComplexMatrix::zeros(4, 3);
        assert!(truncated_svd(&m, 0, 0).is_err());
        assert!(truncated_svd(&m, 4, 0).is_err());
    }
}
