//! Three-level dynamic MRI reconstruction: a common mean image, a low-rank
//! dynamic component and a small residual fitted last.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::altgdmin::{
    run_altgdmin, update_b, AltGdminConfig, AltGdminOutput, FactorPair, WarmStart,
};
use crate::error::{Error, Result};
use crate::evalkit::ns_mse;
use crate::linalg::matrix::{norm, norm_sqr, sub_vec, ZERO};
use crate::linalg::{
    cgls_solve, operator_norm, row_dft, row_idft, soft_threshold, truncated_svd, ComplexMatrix,
    OpRef, C64,
};
use crate::operators::{check_problem, derive_seed, make_mean_operator, MeasurementSet};
use crate::parallel::try_map_frames;
use crate::report::{ConditionDiagnostics, EnergyDiagnostics, ReconReport, StageError};

pub const MEAN_CGLS_ITERS: usize = 10;
pub const MEAN_CGLS_TOL: f64 = 1e-36;
/// Iteration cap of the residual CGLS; the early stop is its only regularization.
pub const MEC_CGLS_ITERS: usize = 3;
pub const ISTA_MAX_ITERS: usize = 10;
/// Threshold as a fraction of the largest magnitude of the thresholded input.
pub const ISTA_THRESHOLD_FRACTION: f64 = 0.001;
pub const ISTA_STOP_TOL: f64 = 0.0025;

const OPERATOR_NORM_ITERS: usize = 30;

/// `Ẑ = z̄ 1ᵀ + X̂ + Ê`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeLevelModel {
    pub mean: Vec<C64>,
    pub lowrank: ComplexMatrix,
    pub residual: ComplexMatrix,
}

impl ThreeLevelModel {
    pub fn new(mean: Vec<C64>, lowrank: ComplexMatrix, residual: ComplexMatrix) -> Result<Self> {
        if lowrank.shape() != residual.shape() || mean.len() != lowrank.rows() {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {}, low-rank part {:?}, residual {:?}",
                mean.len(),
                lowrank.shape(),
                residual.shape()
            )));
        }
        Ok(ThreeLevelModel {
            mean,
            lowrank,
            residual,
        })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn q(&self) -> usize {
        self.lowrank.cols()
    }

    pub fn mean_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.n(), self.q(), |i, _| self.mean[i])
    }

    /// Mean plus low-rank part, without the residual.
    pub fn smooth(&self) -> ComplexMatrix {
        self.mean_matrix().add(&self.lowrank)
    }

    pub fn assemble(&self) -> ComplexMatrix {
        self.smooth().add(&self.residual)
    }
}

/// Least-squares common image `argmin_z Σ_k ‖y_k − A_k z‖²` by capped CGLS.
pub fn estimate_mean(y: &MeasurementSet, ops: &[OpRef]) -> Result<Vec<C64>> {
    let n = check_problem(y, ops)?;
    let op = make_mean_operator(ops)?;
    let stacked = op.stack(y);
    Ok(cgls_solve(
        &op,
        &stacked,
        &vec![ZERO; n],
        MEAN_CGLS_ITERS,
        MEAN_CGLS_TOL,
    )
    .x)
}

/// `ỹ_k = y_k − A_k z̄`.
pub fn subtract_mean(y: &MeasurementSet, ops: &[OpRef], mean: &[C64]) -> Result<MeasurementSet> {
    let n = check_problem(y, ops)?;
    if mean.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, expected {n}",
            mean.len()
        )));
    }
    let frames = try_map_frames(y.q(), |k| Ok(sub_vec(y.frame(k), &ops[k].forward(mean))))?;
    MeasurementSet::new(frames)
}

/// What the mean and low-rank levels leave unexplained: `y_k − A_k(z̄ + x̂_k)`.
pub fn residual_measurements(
    y: &MeasurementSet,
    ops: &[OpRef],
    mean: &[C64],
    lowrank: &ComplexMatrix,
) -> Result<MeasurementSet> {
    let n = check_problem(y, ops)?;
    if mean.len() != n || lowrank.shape() != (n, y.q()) {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {}, low-rank part {:?}, expected n = {n}, q = {}",
            mean.len(),
            lowrank.shape(),
            y.q()
        )));
    }
    let frames = try_map_frames(y.q(), |k| {
        let smooth: Vec<C64> = mean
            .iter()
            .zip(lowrank.col(k))
            .map(|(a, b)| a + b)
            .collect();
        Ok(sub_vec(y.frame(k), &ops[k].forward(&smooth)))
    })?;
    MeasurementSet::new(frames)
}

/// Per-frame residual image from a few CGLS iterations started at zero.
pub fn mec_unstructured(
    y: &MeasurementSet,
    ops: &[OpRef],
    mean: &[C64],
    lowrank: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let resid = residual_measurements(y, ops, mean, lowrank)?;
    let n = mean.len();
    let cols = try_map_frames(y.q(), |k| {
        Ok(cgls_solve(
            &ops[k],
            resid.frame(k),
            &vec![ZERO; n],
            MEC_CGLS_ITERS,
            MEAN_CGLS_TOL,
        )
        .x)
    })?;
    ComplexMatrix::from_columns(n, &cols)
}

#[derive(Clone, Debug)]
pub struct IstaOutcome {
    pub estimate: ComplexMatrix,
    pub iterations: usize,
    pub converged: bool,
}

fn stack_adjoint(ops: &[OpRef], y: &MeasurementSet, n: usize) -> Result<ComplexMatrix> {
    let cols = try_map_frames(y.q(), |k| Ok(ops[k].adjoint(y.frame(k))))?;
    ComplexMatrix::from_columns(n, &cols)
}

/// Residual that is sparse along the temporal Fourier axis, fitted by iterative
/// soft thresholding of the row-wise temporal spectrum.
///
/// The gradient step is `1/L²` with `L` the largest per-frame operator norm,
/// which is exactly one for masked unitary Fourier operators.
pub fn mec_sparse_ista(
    y: &MeasurementSet,
    ops: &[OpRef],
    mean: &[C64],
    lowrank: &ComplexMatrix,
) -> Result<IstaOutcome> {
    let resid = residual_measurements(y, ops, mean, lowrank)?;
    let (n, q) = (mean.len(), y.q());
    let lipschitz = ops
        .iter()
        .enumerate()
        .map(|(k, op)| {
            operator_norm(
                op.as_ref(),
                OPERATOR_NORM_ITERS,
                derive_seed(0x15_7a, k as u64),
            )
        })
        .fold(0.0, f64::max);
    let step = if lipschitz > 0.0 {
        1.0 / (lipschitz * lipschitz)
    } else {
        1.0
    };

    let mut estimate = ComplexMatrix::zeros(n, q);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..ISTA_MAX_ITERS {
        iterations += 1;
        let fit_frames = try_map_frames(q, |k| {
            Ok(sub_vec(resid.frame(k), &ops[k].forward(estimate.col(k))))
        })?;
        let back = stack_adjoint(ops, &MeasurementSet::new(fit_frames)?, n)?;
        let input = row_idft(&estimate.add(&back.scaled(C64::new(step, 0.0))));
        let omega = ISTA_THRESHOLD_FRACTION
            * input
                .as_slice()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
        let next = row_dft(&soft_threshold(&input, omega));
        let prev_norm = estimate.frobenius_norm();
        let change = next.sub(&estimate).frobenius_norm();
        estimate = next;
        if prev_norm == 0.0 {
            if change == 0.0 {
                converged = true;
                break;
            }
        } else if change / prev_norm < ISTA_STOP_TOL {
            converged = true;
            break;
        }
    }
    Ok(IstaOutcome {
        estimate,
        iterations,
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MecKind {
    None,
    Unstructured,
    Sparse,
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub subtract_mean: bool,
    pub mec: MecKind,
    pub warm_start: Option<WarmStart>,
    /// Subtract this mean instead of estimating one.
    pub fixed_mean: Option<Vec<C64>>,
    /// Keep this basis and only fit coefficients against it.
    pub fixed_basis: Option<ComplexMatrix>,
    /// Compute condition-number and energy diagnostics for the report.
    pub diagnostics: bool,
}

impl PipelineOptions {
    pub fn mri() -> Self {
        PipelineOptions {
            subtract_mean: true,
            mec: MecKind::Unstructured,
            warm_start: None,
            fixed_mean: None,
            fixed_basis: None,
            diagnostics: true,
        }
    }

    pub fn mri2() -> Self {
        PipelineOptions {
            mec: MecKind::Sparse,
            ..Self::mri()
        }
    }

    /// Low-rank recovery directly on the raw data.
    pub fn plain() -> Self {
        PipelineOptions {
            subtract_mean: false,
            mec: MecKind::None,
            warm_start: None,
            fixed_mean: None,
            fixed_basis: None,
            diagnostics: true,
        }
    }

    fn algorithm_name(&self) -> &'static str {
        match (self.subtract_mean, self.mec) {
            (_, MecKind::Sparse) => "mri2",
            (_, MecKind::Unstructured) => "mri",
            (true, MecKind::None) => "mean+altgdmin",
            (false, MecKind::None) => "altgdmin",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub model: ThreeLevelModel,
    pub report: ReconReport,
    pub factors: FactorPair,
}

fn condition_at(m: &ComplexMatrix, rank: usize, seed: u64) -> Result<f64> {
    let k = rank.min(m.rows().min(m.cols()));
    let s = truncated_svd(m, k, seed)?.s;
    Ok(if s[k - 1] > 0.0 {
        s[0] / s[k - 1]
    } else {
        f64::INFINITY
    })
}

/// Mean, low-rank and residual levels chained as configured by `options`.
pub fn run_three_level(
    y: &MeasurementSet,
    ops: &[OpRef],
    cfg: &AltGdminConfig,
    options: &PipelineOptions,
) -> Result<PipelineRun> {
    let n = check_problem(y, ops)?;
    let q = y.q();
    let mut report = ReconReport::new(options.algorithm_name(), cfg);
    let start = Instant::now();

    let (mean, centered) = match (&options.fixed_mean, options.subtract_mean) {
        (Some(mean), _) => (mean.clone(), subtract_mean(y, ops, mean)?),
        (None, true) => {
            let t = Instant::now();
            let mean = estimate_mean(y, ops)?;
            let centered = subtract_mean(y, ops, &mean)?;
            report.add_stage("mean", t.elapsed().as_secs_f64());
            (mean, centered)
        }
        (None, false) => (vec![ZERO; n], y.clone()),
    };

    let t = Instant::now();
    let AltGdminOutput {
        factors,
        xhat,
        trace,
        rank,
        step_size,
        converged,
    } = match &options.fixed_basis {
        Some(basis) => {
            if basis.rows() != n || basis.cols() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "fixed basis is {:?}, expected {n} rows",
                    basis.shape()
                )));
            }
            let b = update_b(basis, &centered, ops)?;
            let factors = FactorPair {
                u: basis.clone(),
                b,
            };
            AltGdminOutput {
                xhat: factors.reconstruct(),
                rank: basis.cols(),
                factors,
                trace: Vec::new(),
                step_size: 0.0,
                converged: true,
            }
        }
        None => run_altgdmin(&centered, ops, cfg, options.warm_start.as_ref())?,
    };
    report.add_stage("altgdmin", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let residual = match options.mec {
        MecKind::None => ComplexMatrix::zeros(n, q),
        MecKind::Unstructured => mec_unstructured(y, ops, &mean, &xhat)?,
        MecKind::Sparse => {
            let outcome = mec_sparse_ista(y, ops, &mean, &xhat)?;
            report.mec_iterations = Some(outcome.iterations);
            outcome.estimate
        }
    };
    if options.mec != MecKind::None {
        report.add_stage("mec", t.elapsed().as_secs_f64());
    }
    report.total_seconds = start.elapsed().as_secs_f64();

    report.rank = rank;
    report.iterations = trace.len();
    report.converged = converged;
    report.step_size = step_size;
    report.trace = trace;

    let model = ThreeLevelModel::new(mean, xhat, residual)?;
    if options.diagnostics {
        report.condition = Some(ConditionDiagnostics {
            full: condition_at(&model.assemble(), rank, cfg.seed)?,
            lowrank: condition_at(&model.lowrank, rank, cfg.seed)?,
        });
        report.energy = Some(EnergyDiagnostics {
            mean: (q as f64).sqrt() * norm(&model.mean),
            lowrank: model.lowrank.frobenius_norm(),
            residual: model.residual.frobenius_norm(),
        });
    }
    Ok(PipelineRun {
        model,
        report,
        factors,
    })
}

/// Mean, low-rank and unstructured residual correction.
pub fn run_altgdmin_mri(
    y: &MeasurementSet,
    ops: &[OpRef],
    cfg: &AltGdminConfig,
) -> Result<(ThreeLevelModel, ReconReport)> {
    let run = run_three_level(y, ops, cfg, &PipelineOptions::mri())?;
    Ok((run.model, run.report))
}

/// Mean, low-rank and temporally sparse residual correction.
pub fn run_altgdmin_mri2(
    y: &MeasurementSet,
    ops: &[OpRef],
    cfg: &AltGdminConfig,
) -> Result<(ThreeLevelModel, ReconReport)> {
    let run = run_three_level(y, ops, cfg, &PipelineOptions::mri2())?;
    Ok((run.model, run.report))
}

/// Scores `model` against `truth`, filling the overall error, the per-frame
/// distances and the error after each level.
pub fn evaluate_model(
    report: &mut ReconReport,
    model: &ThreeLevelModel,
    truth: &ComplexMatrix,
) -> Result<()> {
    let levels = (norm_sqr(&model.mean) > 0.0).then(|| (model.mean_matrix(), model.smooth()));
    evaluate_levels(
        report,
        levels.as_ref().map(|(m, s)| (m, s)),
        &model.assemble(),
        truth,
    )
}

/// Like [`evaluate_model`] for levels given as full matrices; `levels` holds
/// the mean-only and mean-plus-low-rank estimates when a mean was subtracted.
pub fn evaluate_levels(
    report: &mut ReconReport,
    levels: Option<(&ComplexMatrix, &ComplexMatrix)>,
    full: &ComplexMatrix,
    truth: &ComplexMatrix,
) -> Result<()> {
    let (error, dists) = ns_mse(truth, full)?;
    report.error = Some(error);
    report.frame_dists = dists;
    report.stage_errors.clear();
    if let Some((mean, smooth)) = levels {
        for (stage, estimate) in [("mean", mean), ("mean+lowrank", smooth)] {
            report.stage_errors.push(StageError {
                stage: stage.to_string(),
                error: ns_mse(truth, estimate)?.0,
            });
        }
    }
    report.stage_errors.push(StageError {
        stage: "full".to_string(),
        error,
    });
    Ok(())
}
