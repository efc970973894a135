//! Alternating projected gradient descent and minimization (altGDmin) for
//! recovering a low-rank `n x q` matrix from per-column measurements.
//!
//! The unknown is factored as `X = U B` with orthonormal `U`. Every iteration
//! solves a small least-squares problem per column for `B`, takes one
//! gradient step on `U` and re-orthonormalizes it with QR.
//!
//! Parameters are set automatically:
//!
//! * truncated spectral initialization with threshold constant `C̃ = 36`,
//! * rank from an 85% energy rule on the leading singular values of `X₀`,
//! * step size `η = 0.14 / ‖∇_U f‖` fixed at the first iteration,
//! * at most 70 iterations, leaving early once `SD(U_{t−1}, U_t)/√r < 0.01`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matrix::{norm_sqr, sub_vec, ZERO};
use crate::linalg::{
    householder_qr, qr_orthonormalize, spectral_norm, subspace_distance, truncated_svd,
    ComplexMatrix, OpRef, C64,
};
use crate::operators::{check_problem, derive_seed, MeasurementSet};
use crate::parallel::{try_map_frames, ReductionMode};

/// Relative threshold on `R`'s diagonal below which a column system counts as singular.
const SINGULAR_COLUMN_TOL: f64 = 1e-10;

/// Slack for the energy comparison in the rank rule, so that spectra sitting
/// exactly on the `b%` boundary are not pushed over it by rounding.
const ENERGY_RULE_SLACK: f64 = 1e-10;

/// Residual relative to `‖Y‖_F` treated as an exact fit at the first iteration.
const EXACT_FIT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltGdminConfig {
    /// Truncation constant `C̃` for the initialization.
    pub trunc_const: f64,
    /// Energy percentage `b` of the rank rule.
    pub energy_pct: f64,
    /// Numerator of the step size `η = step_factor / ‖∇_U f‖`.
    pub step_factor: f64,
    pub max_iters: usize,
    pub exit_tol: f64,
    pub rank_override: Option<usize>,
    pub seed: u64,
    pub reduction: ReductionMode,
}

impl Default for AltGdminConfig {
    fn default() -> Self {
        AltGdminConfig {
            trunc_const: 36.0,
            energy_pct: 85.0,
            step_factor: 0.14,
            max_iters: 70,
            exit_tol: 0.01,
            rank_override: None,
            seed: 0,
            reduction: ReductionMode::Ordered,
        }
    }
}

impl AltGdminConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trunc_const", self.trunc_const),
            ("energy_pct", self.energy_pct),
            ("step_factor", self.step_factor),
            ("exit_tol", self.exit_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.energy_pct > 100.0 {
            return Err(Error::InvalidParameter(format!(
                "energy_pct must not exceed 100, got {}",
                self.energy_pct
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if self.rank_override == Some(0) {
            return Err(Error::InvalidParameter(
                "rank_override must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Orthonormal basis `U` (`n x r`) and coefficients `B` (`r x q`).
#[derive(Clone, Debug)]
pub struct FactorPair {
    pub u: ComplexMatrix,
    pub b: ComplexMatrix,
}

impl FactorPair {
    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.u.matmul(&self.b)
    }
}

/// Start from a given basis instead of the spectral initialization.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub basis: ComplexMatrix,
    pub max_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `SD(U_{t−1}, U_t) / √r`.
    pub subspace_change: f64,
    /// `‖Y − 𝒜(U_{t−1} B_t)‖_F`.
    pub residual: f64,
    /// `η · ‖∇_U f‖` (spectral norm).
    pub step_norm: f64,
}

#[derive(Clone, Debug)]
pub struct AltGdminOutput {
    pub factors: FactorPair,
    pub xhat: ComplexMatrix,
    pub trace: Vec<IterationRecord>,
    pub rank: usize,
    pub step_size: f64,
    pub converged: bool,
}

impl AltGdminOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Snapshot passed to a monitor after the `B` update of each iteration.
pub struct IterationState<'a> {
    pub iteration: usize,
    /// Basis the coefficients were fitted against.
    pub basis: &'a ComplexMatrix,
    pub coeffs: &'a ComplexMatrix,
}

/// Truncated, scaled adjoint stack used for the spectral initialization.
///
/// Column `k` is `(1/√(m_k m̄)) A_kᴴ (y_k ∘ 𝟙{|y_k| ≤ √α})` with
/// `α = C̃ Σ|y_ki|² / (m q)` and `m = max_k m_k`.
pub fn compute_init_matrix(
    y: &MeasurementSet,
    ops: &[OpRef],
    trunc_const: f64,
) -> Result<ComplexMatrix> {
    let n = check_problem(y, ops)?;
    let q = y.q();
    let m = y.max_len() as f64;
    let m_bar = y.mean_len();
    let energy: f64 = y.frames().iter().map(|f| norm_sqr(f)).sum();
    let alpha = trunc_const * energy / (m * q as f64);
    let cutoff = alpha.sqrt();
    let cols = try_map_frames(q, |k| {
        let frame = y.frame(k);
        let truncated: Vec<C64> = frame
            .iter()
            .map(|&v| if v.norm() <= cutoff { v } else { ZERO })
            .collect();
        let scale = 1.0 / ((frame.len() as f64) * m_bar).sqrt();
        let mut col = ops[k].adjoint(&truncated);
        col.iter_mut().for_each(|z| *z *= scale);
        Ok(col)
    })?;
    ComplexMatrix::from_columns(n, &cols)
}

/// Number of leading singular values the rank rule looks at: `max(1, ⌊min(n, q, m)/10⌋)`.
pub fn energy_window(n: usize, q: usize, m: usize) -> usize {
    (n.min(q).min(m) / 10).max(1)
}

/// Smallest `r` whose leading energy reaches `b%` of the total energy of `sigmas`.
pub fn rank_from_spectrum(sigmas: &[f64], energy_pct: f64) -> usize {
    let total: f64 = sigmas.iter().map(|s| s * s).sum();
    let target = energy_pct / 100.0 * total;
    let mut cumulative = 0.0;
    for (i, s) in sigmas.iter().enumerate() {
        cumulative += s * s;
        if cumulative >= target * (1.0 - ENERGY_RULE_SLACK) {
            return i + 1;
        }
    }
    sigmas.len().max(1)
}

/// Rank estimate from the `b%` energy rule on the top `J` singular values of `x0`.
pub fn estimate_rank(x0: &ComplexMatrix, m: usize, energy_pct: f64, seed: u64) -> Result<usize> {
    if !(energy_pct > 0.0 && energy_pct <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "energy_pct {energy_pct} outside (0, 100]"
        )));
    }
    let (n, q) = x0.shape();
    let window = energy_window(n, q, m).min(n.min(q));
    let svd = truncated_svd(x0, window, seed)?;
    Ok(rank_from_spectrum(&svd.s, energy_pct))
}

struct FrameFit {
    coeffs: Vec<C64>,
    /// `A_kᴴ(A_k U b_k − y_k)`.
    back_residual: Vec<C64>,
    residual_sqr: f64,
}

fn fit_frame(
    k: usize,
    u: &ComplexMatrix,
    y: &[C64],
    op: &OpRef,
    with_gradient: bool,
) -> Result<FrameFit> {
    let r = u.cols();
    if y.len() < r {
        return Err(Error::UnderdeterminedColumn {
            column: k,
            measurements: y.len(),
            rank: r,
        });
    }
    let cols: Vec<Vec<C64>> = u.columns().map(|c| op.forward(c)).collect();
    let au = ComplexMatrix::from_columns(y.len(), &cols)?;
    let qr = householder_qr(&au);
    let (_, dmin) = qr.min_diagonal();
    if dmin <= SINGULAR_COLUMN_TOL * qr.max_diagonal() || dmin == 0.0 {
        return Err(Error::SingularColumn(k));
    }
    let coeffs = qr.solve_least_squares(y);
    if !with_gradient {
        return Ok(FrameFit {
            coeffs,
            back_residual: Vec::new(),
            residual_sqr: 0.0,
        });
    }
    let residual = sub_vec(&au.mul_vec(&coeffs), y);
    Ok(FrameFit {
        back_residual: op.adjoint(&residual),
        residual_sqr: norm_sqr(&residual),
        coeffs,
    })
}

fn coeff_matrix(r: usize, fits: &[FrameFit]) -> ComplexMatrix {
    let cols: Vec<Vec<C64>> = fits.iter().map(|f| f.coeffs.clone()).collect();
    ComplexMatrix::from_columns(r, &cols).expect("coefficient length")
}

/// Column-wise least squares `b_k = (A_k U)† y_k`.
pub fn update_b(u: &ComplexMatrix, y: &MeasurementSet, ops: &[OpRef]) -> Result<ComplexMatrix> {
    check_problem(y, ops)?;
    let fits = try_map_frames(y.q(), |k| fit_frame(k, u, y.frame(k), &ops[k], false))?;
    Ok(coeff_matrix(u.cols(), &fits))
}

/// `Σ_k g_k b_kᴴ` with `g_k` the back-projected residual of frame `k`.
fn accumulate_gradient(
    n: usize,
    r: usize,
    fits: &[FrameFit],
    mode: ReductionMode,
) -> ComplexMatrix {
    let outer = |acc: &mut ComplexMatrix, fit: &FrameFit| {
        for (j, bj) in fit.coeffs.iter().enumerate() {
            let w = bj.conj();
            for (a, g) in acc.col_mut(j).iter_mut().zip(&fit.back_residual) {
                *a += g * w;
            }
        }
    };
    match mode {
        ReductionMode::Ordered => {
            let mut acc = ComplexMatrix::zeros(n, r);
            for fit in fits {
                outer(&mut acc, fit);
            }
            acc
        }
        ReductionMode::Unordered => {
            use rayon::prelude::*;
            fits.par_iter()
                .fold(
                    || ComplexMatrix::zeros(n, r),
                    |mut acc, fit| {
                        outer(&mut acc, fit);
                        acc
                    },
                )
                .reduce(|| ComplexMatrix::zeros(n, r), |a, b| a.add(&b))
        }
    }
}

/// `∇_U f(U, B) = Σ_k A_kᴴ(A_k U b_k − y_k) b_kᴴ`.
pub fn compute_gradient(
    u: &ComplexMatrix,
    b: &ComplexMatrix,
    y: &MeasurementSet,
    ops: &[OpRef],
    mode: ReductionMode,
) -> Result<ComplexMatrix> {
    let n = check_problem(y, ops)?;
    if u.rows() != n || b.rows() != u.cols() || b.cols() != y.q() {
        return Err(Error::DimensionMismatch(format!(
            "gradient with U {:?}, B {:?}, n = {n}, q = {}",
            u.shape(),
            b.shape(),
            y.q()
        )));
    }
    let fits = try_map_frames(y.q(), |k| {
        let coeffs = b.col(k).to_vec();
        let xk = u.mul_vec(&coeffs);
        let residual = sub_vec(&ops[k].forward(&xk), y.frame(k));
        Ok(FrameFit {
            back_residual: ops[k].adjoint(&residual),
            residual_sqr: norm_sqr(&residual),
            coeffs,
        })
    })?;
    Ok(accumulate_gradient(n, u.cols(), &fits, mode))
}

/// Data-fit cost `f(U, B) = Σ_k ‖y_k − A_k U b_k‖²`.
pub fn objective(
    u: &ComplexMatrix,
    b: &ComplexMatrix,
    y: &MeasurementSet,
    ops: &[OpRef],
) -> Result<f64> {
    check_problem(y, ops)?;
    let parts = try_map_frames(y.q(), |k| {
        let xk = u.mul_vec(b.col(k));
        Ok(norm_sqr(&sub_vec(&ops[k].forward(&xk), y.frame(k))))
    })?;
    Ok(parts.iter().sum())
}

/// Runs altGDmin with automatic parameters.
pub fn run_altgdmin(
    y: &MeasurementSet,
    ops: &[OpRef],
    cfg: &AltGdminConfig,
    warm_start: Option<&WarmStart>,
) -> Result<AltGdminOutput> {
    run_altgdmin_monitored(y, ops, cfg, warm_start, |_| {})
}

/// [`run_altgdmin`] with a callback invoked after every coefficient update.
pub fn run_altgdmin_monitored(
    y: &MeasurementSet,
    ops: &[OpRef],
    cfg: &AltGdminConfig,
    warm_start: Option<&WarmStart>,
    mut monitor: impl FnMut(&IterationState<'_>),
) -> Result<AltGdminOutput> {
    cfg.validate()?;
    let n = check_problem(y, ops)?;
    let q = y.q();

    let (mut u, max_iters) = match warm_start {
        Some(ws) => {
            if ws.basis.rows() != n || ws.basis.cols() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "warm-start basis is {:?}, expected {n} rows",
                    ws.basis.shape()
                )));
            }
            let defect = ws.basis.orthonormality_defect();
            if defect > 1e-8 {
                return Err(Error::NotOrthonormal(defect));
            }
            (ws.basis.clone(), ws.max_iters)
        }
        None => (spectral_init(y, ops, cfg, n, q)?, cfg.max_iters),
    };
    let r = u.cols();
    let sqrt_r = (r as f64).sqrt();

    let data_norm = y.frobenius_norm();
    let mut trace = Vec::new();
    let mut step_size = 0.0;
    let mut converged = false;
    for t in 1..=max_iters {
        let fits = try_map_frames(q, |k| fit_frame(k, &u, y.frame(k), &ops[k], true))?;
        let b = coeff_matrix(r, &fits);
        monitor(&IterationState {
            iteration: t,
            basis: &u,
            coeffs: &b,
        });
        let residual = fits.iter().map(|f| f.residual_sqr).sum::<f64>().sqrt();
        let grad = accumulate_gradient(n, r, &fits, cfg.reduction);
        let grad_norm = spectral_norm(&grad, derive_seed(cfg.seed, t as u64));
        if t == 1 {
            if grad_norm == 0.0 || residual <= EXACT_FIT_TOL * data_norm {
                // Exact fit at the start; a step size from a rounding-level gradient would explode.
                converged = true;
                trace.push(IterationRecord {
                    iteration: t,
                    subspace_change: 0.0,
                    residual,
                    step_norm: 0.0,
                });
                break;
            }
            step_size = cfg.step_factor / grad_norm;
        }
        let stepped = u.sub(&grad.scaled(C64::new(step_size, 0.0)));
        let (next, _) = qr_orthonormalize(&stepped)?;
        let change = subspace_distance(&u, &next)? / sqrt_r;
        trace.push(IterationRecord {
            iteration: t,
            subspace_change: change,
            residual,
            step_norm: step_size * grad_norm,
        });
        u = next;
        if change < cfg.exit_tol {
            converged = true;
            break;
        }
    }

    let b = update_b(&u, y, ops)?;
    let factors = FactorPair { u, b };
    Ok(AltGdminOutput {
        xhat: factors.reconstruct(),
        factors,
        trace,
        rank: r,
        step_size,
        converged,
    })
}

fn spectral_init(
    y: &MeasurementSet,
    ops: &[OpRef],
    cfg: &AltGdminConfig,
    n: usize,
    q: usize,
) -> Result<ComplexMatrix> {
    let x0 = compute_init_matrix(y, ops, cfg.trunc_const)?;
    let window = energy_window(n, q, y.max_len()).min(n.min(q));
    let keep = window.max(cfg.rank_override.unwrap_or(0)).min(n.min(q));
    let svd = truncated_svd(&x0, keep, cfg.seed)?;
    let rank = match cfg.rank_override {
        Some(r) if r > n.min(q) => {
            return Err(Error::InvalidParameter(format!(
                "rank {r} exceeds min(n, q) = {}",
                n.min(q)
            )))
        }
        Some(r) => r,
        None => rank_from_spectrum(&svd.s[..window], cfg.energy_pct),
    };
    Ok(svd.u.col_range(0, rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix::random_vector;
    use crate::linalg::DenseMap;
    use crate::operators::{apply_forward_stack, gaussian_stack, identity_stack};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn orthonormal(n: usize, r: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        qr_orthonormalize(&ComplexMatrix::random_complex_normal(n, r, &mut rng))
            .unwrap()
            .0
    }

    #[test]
    fn init_matrix_of_zero_data_is_zero() {
        let ops = gaussian_stack(6, 4, 3, 0).unwrap();
        let y = MeasurementSet::new(vec![vec![ZERO; 4]; 3]).unwrap();
        assert_eq!(
            compute_init_matrix(&y, &ops, 36.0)
                .unwrap()
                .frobenius_norm(),
            0.0
        );
    }

    #[test]
    fn init_truncation_behaviour() {
        let ops = identity_stack(4, 2);
        let one = C64::new(1.0, 0.0);
        // Uniform magnitudes: nothing truncated, plain scaled adjoint.
        let y = MeasurementSet::new(vec![vec![one; 4], vec![-one; 4]]).unwrap();
        let x0 = compute_init_matrix(&y, &ops, 36.0).unwrap();
        for k in 0..2 {
            for i in 0..4 {
                assert!((x0[(i, k)] - y.frame(k)[i] / 4.0).norm() < 1e-15);
            }
        }
        // 64 x 2 unit entries except one of magnitude 10:
        // α = 36 (127 + 100) / 128 ≈ 63.8 lies between 1 and 100.
        let ops = identity_stack(64, 2);
        let mut f0 = vec![one; 64];
        f0[2] = C64::new(0.0, 10.0);
        let y = MeasurementSet::new(vec![f0, vec![one; 64]]).unwrap();
        let alpha = 36.0 * (127.0 + 100.0) / 128.0;
        assert!(100.0 > alpha && 1.0 <= alpha);
        let x0 = compute_init_matrix(&y, &ops, 36.0).unwrap();
        assert_eq!(x0[(2, 0)], ZERO);
        assert!((x0[(0, 0)] - one / 64.0).norm() < 1e-15);
    }

    #[test]
    fn rank_rule_arithmetic() {
        let s = |e: &[f64]| e.iter().map(|v| v.sqrt()).collect::<Vec<_>>();
        assert_eq!(rank_from_spectrum(&s(&[100.0, 10.0, 1.0, 0.0]), 85.0), 1);
        assert_eq!(rank_from_spectrum(&s(&[50.0, 50.0, 0.0]), 85.0), 2);
        assert_eq!(rank_from_spectrum(&s(&[85.0, 15.0]), 85.0), 1);
        assert_eq!(rank_from_spectrum(&s(&[1.0]), 100.0), 1);
        assert_eq!(energy_window(400, 100, 80), 8);
        assert_eq!(energy_window(5, 100, 80), 1);
    }

    #[test]
    fn estimate_rank_on_rank_one_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ComplexMatrix::random_complex_normal(40, 1, &mut rng);
        let b = ComplexMatrix::random_complex_normal(1, 30, &mut rng);
        assert_eq!(estimate_rank(&a.matmul(&b), 40, 85.0, 0).unwrap(), 1);
    }

    #[test]
    fn update_b_examples() {
        // Consistent data with the true basis.
        let u = orthonormal(20, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bstar = ComplexMatrix::random_complex_normal(2, 5, &mut rng);
        let ops = gaussian_stack(20, 10, 5, 3).unwrap();
        let y = apply_forward_stack(&ops, &u.matmul(&bstar)).unwrap();
        let b = update_b(&u, &y, &ops).unwrap();
        assert!(b.sub(&bstar).frobenius_norm() < 1e-8);

        // Identity operators with r = 1: projection coefficients.
        let u1 = orthonormal(6, 1, 4);
        let yi = MeasurementSet::new(vec![random_vector(6, &mut rng)]).unwrap();
        let b1 = update_b(&u1, &yi, &identity_stack(6, 1)).unwrap();
        let want = crate::linalg::matrix::dot(u1.col(0), yi.frame(0));
        assert!((b1[(0, 0)] - want).norm() < 1e-14);
    }

    #[test]
    fn update_b_matches_pseudo_inverse_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = orthonormal(20, 2, 6);
        let ops = gaussian_stack(20, 10, 3, 7).unwrap();
        let y = MeasurementSet::new((0..3).map(|_| random_vector(10, &mut rng)).collect()).unwrap();
        let b = update_b(&u, &y, &ops).unwrap();
        for k in 0..3 {
            let cols: Vec<Vec<C64>> = u.columns().map(|c| ops[k].forward(c)).collect();
            let m = ComplexMatrix::from_columns(10, &cols).unwrap();
            // Normal equations solved by Cramer's rule on the 2x2 Gram matrix.
            let g = m.adjoint_matmul(&m);
            let rhs = m.adjoint_mul_vec(y.frame(k));
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            let b0 = (rhs[0] * g[(1, 1)] - g[(0, 1)] * rhs[1]) / det;
            let b1 = (g[(0, 0)] * rhs[1] - g[(1, 0)] * rhs[0]) / det;
            assert!((b[(0, k)] - b0).norm() < 1e-8);
            assert!((b[(1, k)] - b1).norm() < 1e-8);
        }
    }

    #[test]
    fn update_b_errors() {
        let u = orthonormal(8, 3, 1);
        let ops = gaussian_stack(8, 2, 1, 0).unwrap();
        let y = MeasurementSet::new(vec![vec![ZERO; 2]]).unwrap();
        assert!(matches!(
            update_b(&u, &y, &ops),
            Err(Error::UnderdeterminedColumn { column: 0, .. })
        ));

        // An operator that annihilates the second basis vector.
        let mut e = ComplexMatrix::zeros(3, 2);
        e[(0, 0)] = C64::new(1.0, 0.0);
        e[(1, 1)] = C64::new(1.0, 0.0);
        let mut a = ComplexMatrix::zeros(4, 3);
        a[(0, 0)] = C64::new(1.0, 0.0);
        let op: OpRef = Arc::new(DenseMap { matrix: a });
        let y = MeasurementSet::new(vec![vec![ZERO; 4]]).unwrap();
        assert!(matches!(
            update_b(&e, &y, &[op]),
            Err(Error::SingularColumn(0))
        ));
    }

    #[test]
    fn gradient_examples() {
        let u = orthonormal(10, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = ComplexMatrix::random_complex_normal(2, 4, &mut rng);
        let ops = gaussian_stack(10, 6, 4, 10).unwrap();
        let y = apply_forward_stack(&ops, &u.matmul(&b)).unwrap();
        let g = compute_gradient(&u, &b, &y, &ops, ReductionMode::Ordered).unwrap();
        assert!(g.frobenius_norm() < 1e-10);

        // q = 1, identity operator: (U b − y) bᴴ.
        let y1 = MeasurementSet::new(vec![random_vector(10, &mut rng)]).unwrap();
        let b1 = b.col_range(0, 1);
        let g1 =
            compute_gradient(&u, &b1, &y1, &identity_stack(10, 1), ReductionMode::Ordered).unwrap();
        let resid = sub_vec(&u.mul_vec(b1.col(0)), y1.frame(0));
        for i in 0..10 {
            for j in 0..2 {
                assert!((g1[(i, j)] - resid[i] * b1[(j, 0)].conj()).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = ComplexMatrix::random_complex_normal(12, 2, &mut rng);
        let b = ComplexMatrix::random_complex_normal(2, 5, &mut rng);
        let ops = gaussian_stack(12, 7, 5, 12).unwrap();
        let y = MeasurementSet::new((0..5).map(|_| random_vector(7, &mut rng)).collect()).unwrap();
        let g = compute_gradient(&u, &b, &y, &ops, ReductionMode::Ordered).unwrap();
        let du = ComplexMatrix::random_complex_normal(12, 2, &mut rng);
        let h = 1e-6;
        let fp = objective(&u.add(&du.scaled(C64::new(h, 0.0))), &b, &y, &ops).unwrap();
        let fm = objective(&u.sub(&du.scaled(C64::new(h, 0.0))), &b, &y, &ops).unwrap();
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = 2.0 * crate::linalg::matrix::dot(g.as_slice(), du.as_slice()).re;
        assert!(
            (numeric - analytic).abs() <= 1e-4 * analytic.abs(),
            "{numeric} vs {analytic}"
        );
    }

    #[test]
    fn ordered_and_unordered_reductions_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = orthonormal(15, 2, 14);
        let b = ComplexMatrix::random_complex_normal(2, 9, &mut rng);
        let ops = gaussian_stack(15, 8, 9, 15).unwrap();
        let y = MeasurementSet::new((0..9).map(|_| random_vector(8, &mut rng)).collect()).unwrap();
        let a = compute_gradient(&u, &b, &y, &ops, ReductionMode::Ordered).unwrap();
        let c = compute_gradient(&u, &b, &y, &ops, ReductionMode::Unordered).unwrap();
        assert!(a.sub(&c).frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn fully_observed_rank_one_is_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let a = ComplexMatrix::random_complex_normal(30, 1, &mut rng);
        let b = ComplexMatrix::random_complex_normal(1, 12, &mut rng);
        let xstar = a.matmul(&b);
        let ops = identity_stack(30, 12);
        let y = apply_forward_stack(&ops, &xstar).unwrap();
        let cfg = AltGdminConfig::default();
        let out = run_altgdmin(&y, &ops, &cfg, None).unwrap();
        assert_eq!(out.rank, 1);
        assert!(out.iterations() <= 5);
        assert!(out.xhat.sub(&xstar).frobenius_norm() <= 1e-8 * xstar.frobenius_norm());
    }

    #[test]
    fn config_validation() {
        let mut cfg = AltGdminConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.energy_pct = 120.0;
        assert!(cfg.validate().is_err());
        let cfg = AltGdminConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = AltGdminConfig {
            rank_override: Some(0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
