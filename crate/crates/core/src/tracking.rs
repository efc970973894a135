//! Subspace tracking over a frame stream, in mini-batches or one frame at a time.
//!
//! Both modes run the full three-level reconstruction on an initial batch and
//! reuse its basis afterwards. The rank found on the first batch is kept for
//! the rest of the stream.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::altgdmin::{AltGdminConfig, WarmStart};
use crate::error::{Error, Result};
use crate::linalg::matrix::{sub_vec, ZERO};
use crate::linalg::{cgls_solve, householder_qr, subspace_distance, ComplexMatrix, OpRef, C64};
use crate::operators::{check_problem, MeasurementSet};
use crate::pipeline::{
    run_three_level, MecKind, PipelineOptions, PipelineRun, ThreeLevelModel, MEAN_CGLS_TOL,
    MEC_CGLS_ITERS,
};
use crate::report::{BatchRecord, ReconReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinibatchOptions {
    /// Frames in the first batch.
    pub first_batch: usize,
    /// Frames in every later batch (the last one may be shorter).
    pub batch_size: usize,
    pub first_max_iters: usize,
    pub later_max_iters: usize,
    /// Subtract the first batch's mean from every later batch.
    pub freeze_mean: bool,
    /// Keep the first batch's basis and only fit coefficients afterwards.
    pub freeze_subspace: bool,
    pub mec: MecKind,
}

impl MinibatchOptions {
    /// Equal batches of `alpha` frames with 70 iterations on the first and 5 on the rest.
    pub fn new(alpha: usize) -> Self {
        MinibatchOptions {
            first_batch: alpha,
            batch_size: alpha,
            first_max_iters: 70,
            later_max_iters: 5,
            freeze_mean: false,
            freeze_subspace: false,
            mec: MecKind::Unstructured,
        }
    }

    fn validate(&self, q: usize) -> Result<()> {
        if self.first_batch == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch sizes must be at least 1".into(),
            ));
        }
        if self.first_batch > q {
            return Err(Error::InvalidParameter(format!(
                "first batch of {} frames exceeds the {q}-frame stream",
                self.first_batch
            )));
        }
        if self.first_max_iters == 0 || self.later_max_iters == 0 {
            return Err(Error::InvalidParameter(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MinibatchOutput {
    pub batches: Vec<ThreeLevelModel>,
    pub report: ReconReport,
}

impl MinibatchOutput {
    /// The reconstructed stream, batches side by side.
    pub fn reconstruction(&self) -> ComplexMatrix {
        let parts: Vec<ComplexMatrix> =
            self.batches.iter().map(ThreeLevelModel::assemble).collect();
        ComplexMatrix::hstack(&parts).expect("batches share the image size")
    }

    /// One mean column per batch.
    pub fn means(&self) -> ComplexMatrix {
        let n = self.batches[0].n();
        let cols: Vec<Vec<C64>> = self.batches.iter().map(|b| b.mean.clone()).collect();
        ComplexMatrix::from_columns(n, &cols).expect("batches share the image size")
    }

    /// Each batch's mean repeated over that batch's frames.
    pub fn mean_matrix(&self) -> ComplexMatrix {
        let parts: Vec<ComplexMatrix> = self
            .batches
            .iter()
            .map(ThreeLevelModel::mean_matrix)
            .collect();
        ComplexMatrix::hstack(&parts).expect("batches share the image size")
    }

    pub fn lowrank(&self) -> ComplexMatrix {
        let parts: Vec<ComplexMatrix> = self.batches.iter().map(|b| b.lowrank.clone()).collect();
        ComplexMatrix::hstack(&parts).expect("batches share the image size")
    }

    pub fn residual(&self) -> ComplexMatrix {
        let parts: Vec<ComplexMatrix> = self.batches.iter().map(|b| b.residual.clone()).collect();
        ComplexMatrix::hstack(&parts).expect("batches share the image size")
    }
}

fn batch_bounds(q: usize, opts: &MinibatchOptions) -> Vec<(usize, usize)> {
    let mut bounds = vec![(0, opts.first_batch)];
    let mut start = opts.first_batch;
    while start < q {
        let end = (start + opts.batch_size).min(q);
        bounds.push((start, end));
        start = end;
    }
    bounds
}

/// Mini-batch tracking: the first batch runs the full pipeline, later ones
/// warm-start from the previous batch's basis with a short iteration budget.
pub fn run_minibatch_st(
    y: &MeasurementSet,
    ops: &[OpRef],
    opts: &MinibatchOptions,
    cfg: &AltGdminConfig,
) -> Result<MinibatchOutput> {
    check_problem(y, ops)?;
    opts.validate(y.q())?;
    let start = Instant::now();
    let mut report = ReconReport::new("minibatch", cfg);
    let mut batches = Vec::new();
    let mut basis: Option<ComplexMatrix> = None;
    let mut first_mean: Option<Vec<C64>> = None;

    for (index, (lo, hi)) in batch_bounds(y.q(), opts).into_iter().enumerate() {
        let t = Instant::now();
        let frames = hi - lo;
        let yb = y.slice(lo, hi);
        let opsb = &ops[lo..hi];
        let mut options = PipelineOptions {
            mec: opts.mec,
            diagnostics: index == 0,
            ..PipelineOptions::mri()
        };
        let run = match &basis {
            None => {
                let first_cfg = AltGdminConfig {
                    max_iters: opts.first_max_iters,
                    ..cfg.clone()
                };
                run_three_level(&yb, opsb, &first_cfg, &options)?
            }
            Some(u) => {
                if frames < u.cols() {
                    return Err(Error::BatchTooSmall {
                        batch: index,
                        frames,
                        rank: u.cols(),
                    });
                }
                if opts.freeze_mean {
                    options.fixed_mean = first_mean.clone();
                }
                if opts.freeze_subspace {
                    options.fixed_basis = Some(u.clone());
                } else {
                    options.warm_start = Some(WarmStart {
                        basis: u.clone(),
                        max_iters: opts.later_max_iters,
                    });
                }
                run_three_level(&yb, opsb, cfg, &options)?
            }
        };
        let PipelineRun {
            model,
            report: batch_report,
            factors,
        } = run;
        let drift = match &basis {
            Some(prev) => {
                Some(subspace_distance(prev, &factors.u)? / (factors.rank() as f64).sqrt())
            }
            None => None,
        };
        report.batches.push(BatchRecord {
            index,
            first_frame: lo,
            frames,
            iterations: batch_report.iterations,
            subspace_drift: drift,
            seconds: t.elapsed().as_secs_f64(),
        });
        report.iterations += batch_report.iterations;
        if index == 0 {
            report.rank = batch_report.rank;
            report.converged = batch_report.converged;
            report.step_size = batch_report.step_size;
            report.trace = batch_report.trace;
            report.mec_iterations = batch_report.mec_iterations;
            report.condition = batch_report.condition;
            report.energy = batch_report.energy;
            first_mean = Some(model.mean.clone());
        }
        if !(opts.freeze_subspace && basis.is_some()) {
            basis = Some(factors.u);
        }
        batches.push(model);
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok(MinibatchOutput { batches, report })
}

/// Reconstruction of one streamed frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineFrame {
    pub coeffs: Vec<C64>,
    /// `U b` for this frame.
    pub lowrank: Vec<C64>,
    pub residual: Vec<C64>,
    pub latency: f64,
}

/// Frame-at-a-time reconstruction against a frozen mean and basis.
#[derive(Clone, Debug)]
pub struct OnlineTracker {
    mean: Vec<C64>,
    basis: ComplexMatrix,
    frames_seen: usize,
}

impl OnlineTracker {
    /// Runs the full pipeline on the initial frames and freezes its mean and basis.
    pub fn initialize(
        y: &MeasurementSet,
        ops: &[OpRef],
        cfg: &AltGdminConfig,
    ) -> Result<(Self, PipelineRun)> {
        let run = run_three_level(y, ops, cfg, &PipelineOptions::mri())?;
        let tracker = OnlineTracker {
            mean: run.model.mean.clone(),
            basis: run.factors.u.clone(),
            frames_seen: y.q(),
        };
        Ok((tracker, run))
    }

    pub fn from_parts(mean: Vec<C64>, basis: ComplexMatrix) -> Result<Self> {
        if mean.len() != basis.rows() {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {} with a basis of {} rows",
                mean.len(),
                basis.rows()
            )));
        }
        let defect = basis.orthonormality_defect();
        if defect > 1e-8 {
            return Err(Error::NotOrthonormal(defect));
        }
        Ok(OnlineTracker {
            mean,
            basis,
            frames_seen: 0,
        })
    }

    pub fn mean(&self) -> &[C64] {
        &self.mean
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// Index the next pushed frame will get.
    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Reconstructs one frame: coefficients by least squares against `A U`,
    /// then a short CGLS fit of what is left.
    pub fn push(&mut self, y: &[C64], op: &OpRef) -> Result<OnlineFrame> {
        let start = Instant::now();
        let k = self.frames_seen;
        let n = self.mean.len();
        if op.input_dim() != n || op.output_dim() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame {k}: operator {}x{} with {} measurements and n = {n}",
                op.output_dim(),
                op.input_dim(),
                y.len()
            )));
        }
        let r = self.rank();
        if y.len() < r {
            return Err(Error::UnderdeterminedColumn {
                column: k,
                measurements: y.len(),
                rank: r,
            });
        }
        let centered = sub_vec(y, &op.forward(&self.mean));
        let cols: Vec<Vec<C64>> = self.basis.columns().map(|c| op.forward(c)).collect();
        let au = ComplexMatrix::from_columns(y.len(), &cols)?;
        let qr = householder_qr(&au);
        let (_, dmin) = qr.min_diagonal();
        if dmin == 0.0 || dmin <= 1e-10 * qr.max_diagonal() {
            return Err(Error::SingularColumn(k));
        }
        let coeffs = qr.solve_least_squares(&centered);
        let lowrank = self.basis.mul_vec(&coeffs);
        let leftover = sub_vec(&centered, &au.mul_vec(&coeffs));
        let residual = cgls_solve(op, &leftover, &vec![ZERO; n], MEC_CGLS_ITERS, MEAN_CGLS_TOL).x;
        self.frames_seen += 1;
        Ok(OnlineFrame {
            coeffs,
            lowrank,
            residual,
            latency: start.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct OnlineOutput {
    /// Mean, low-rank and residual levels for the whole stream.
    pub model: ThreeLevelModel,
    pub report: ReconReport,
}

/// Online tracking: a batch start on `first_batch` frames, then one frame at a time.
pub fn run_online_st(
    y: &MeasurementSet,
    ops: &[OpRef],
    first_batch: usize,
    cfg: &AltGdminConfig,
) -> Result<OnlineOutput> {
    let n = check_problem(y, ops)?;
    let q = y.q();
    if first_batch == 0 || first_batch > q {
        return Err(Error::InvalidParameter(format!(
            "initial batch of {first_batch} frames for a {q}-frame stream"
        )));
    }
    let start = Instant::now();
    let (mut tracker, first) =
        OnlineTracker::initialize(&y.slice(0, first_batch), &ops[..first_batch], cfg)?;
    let mut lowrank = first.model.lowrank.clone();
    let mut residual = first.model.residual.clone();
    let mut report = first.report;
    report.algorithm = "online".to_string();
    let mut low_cols = Vec::with_capacity(q - first_batch);
    let mut res_cols = Vec::with_capacity(q - first_batch);
    for k in first_batch..q {
        let frame = tracker.push(y.frame(k), &ops[k])?;
        report.frame_latencies.push(frame.latency);
        low_cols.push(frame.lowrank);
        res_cols.push(frame.residual);
    }
    if !low_cols.is_empty() {
        lowrank = ComplexMatrix::hstack(&[lowrank, ComplexMatrix::from_columns(n, &low_cols)?])?;
        residual = ComplexMatrix::hstack(&[residual, ComplexMatrix::from_columns(n, &res_cols)?])?;
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    let model = ThreeLevelModel::new(tracker.mean().to_vec(), lowrank, residual)?;
    Ok(OnlineOutput { model, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_bounds_cover_the_stream() {
        let mut opts = MinibatchOptions::new(4);
        opts.first_batch = 6;
        assert_eq!(
            batch_bounds(15, &opts),
            vec![(0, 6), (6, 10), (10, 14), (14, 15)]
        );
        assert_eq!(batch_bounds(8, &MinibatchOptions::new(8)), vec![(0, 8)]);
    }

    #[test]
    fn option_validation() {
        assert!(MinibatchOptions::new(0).validate(10).is_err());
        assert!(MinibatchOptions::new(11).validate(10).is_err());
        let opts = MinibatchOptions {
            later_max_iters: 0,
            ..MinibatchOptions::new(2)
        };
        assert!(opts.validate(10).is_err());
        assert!(MinibatchOptions::new(10).validate(10).is_ok());
    }

    #[test]
    fn tracker_rejects_mismatched_parts() {
        let basis = ComplexMatrix::eye(4, 2);
        assert!(OnlineTracker::from_parts(vec![ZERO; 3], basis.clone()).is_err());
        assert!(
            OnlineTracker::from_parts(vec![ZERO; 4], basis.scaled(C64::new(2.0, 0.0))).is_err()
        );
        let t = OnlineTracker::from_parts(vec![ZERO; 4], basis).unwrap();
        assert_eq!((t.rank(), t.frames_seen()), (2, 0));
    }
}
