//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrccs::altgdmin::AltGdminConfig;
use lrccs::evalkit::{
    gen_lowrank_instance, gen_phantom_stream, ns_mse, ResidualMode, PHANTOM_RESIDUAL_RATIO,
};
use lrccs::linalg::{ComplexMatrix, OpRef, C64};
use lrccs::operators::fourier::fourier_stack;
use lrccs::operators::{apply_forward_stack, gaussian_stack, MeasurementSet};
use lrccs::parallel::ReductionMode;
use lrccs::pipeline::{
    evaluate_levels, evaluate_model, run_three_level, PipelineOptions, ThreeLevelModel,
};
use lrccs::report::ReconReport;
use lrccs::sampling::{
    bernoulli_masks, cartesian_vd_masks, golden_angle_radial_masks, Grid, SamplingMask,
};
use lrccs::tracking::{run_minibatch_st, MinibatchOptions, OnlineTracker};
use lrccs::{Error, Result};

use crate::container::{
    read_mask, read_matrix, write_mask, write_matrix, ColumnReader, ColumnWriter,
};
use crate::manifest::{check_bound_hash, check_recorded_hash, Manifest};

#[derive(Debug, Parser)]
#[command(
    name = "lrccs",
    version,
    about = "Low-rank plus sparse dynamic MRI reconstruction"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LCX_THREADS")]
    pub threads: Option<usize>,

    /// Read additional flags from a key=value file; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ground-truth sequence.
    Simulate(SimulateArgs),
    /// Generate per-frame k-space sampling masks.
    Mask(MaskArgs),
    /// Apply the forward model to a ground-truth sequence.
    Measure(MeasureArgs),
    /// Reconstruct a sequence from measurements.
    Recon(ReconArgs),
    /// Score a reconstruction against the ground truth.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    Lowrank,
    Phantom,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: SimMode,
    /// Image size (lowrank mode).
    #[arg(long)]
    pub n: Option<usize>,
    /// Image grid, e.g. 64x64 (phantom mode).
    #[arg(long)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub q: usize,
    /// Rank (lowrank mode).
    #[arg(long)]
    pub r: Option<usize>,
    /// Condition number (lowrank mode).
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// none, unstructured or temporal-sparse (phantom mode).
    #[arg(long, default_value = "none")]
    pub residual: ResidualMode,
    /// Motion period in frames (phantom mode, default q).
    #[arg(long)]
    pub period: Option<usize>,
    /// Translation energy relative to the pulsation (phantom mode).
    #[arg(long, default_value_t = 1.0)]
    pub motion: f64,
    /// ‖E*‖/‖X*‖ (phantom mode).
    #[arg(long, default_value_t = PHANTOM_RESIDUAL_RATIO)]
    pub residual_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Radial,
    Cartesian,
    Bernoulli,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct MaskArgs {
    #[arg(long, value_enum)]
    pub scheme: Scheme,
    #[arg(long)]
    pub grid: Grid,
    #[arg(long)]
    pub q: usize,
    /// Spokes per frame (radial).
    #[arg(long)]
    pub lines: Option<usize>,
    /// Acceleration factor (cartesian).
    #[arg(long)]
    pub reduction: Option<f64>,
    /// Sampling probability (bernoulli).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OpMode {
    Fourier,
    Gaussian,
}

impl OpMode {
    fn name(self) -> &'static str {
        match self {
            OpMode::Fourier => "fourier",
            OpMode::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct MeasureArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Sampling mask (fourier mode).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Coil sensitivities, one column per coil (fourier mode).
    #[arg(long)]
    pub coils: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: OpMode,
    /// Measurements per frame (gaussian mode).
    #[arg(long)]
    pub m: Option<usize>,
    /// Operator seed (gaussian mode).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Altgdmin,
    Mri,
    Mri2,
    Minibatch,
    Online,
}

impl Algo {
    fn name(self) -> &'static str {
        match self {
            Algo::Altgdmin => "altgdmin",
            Algo::Mri => "mri",
            Algo::Mri2 => "mri2",
            Algo::Minibatch => "minibatch",
            Algo::Online => "online",
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ReconArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[arg(long)]
    pub meas: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub coils: Option<PathBuf>,
    /// Batch size (minibatch) or initial batch (online).
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Rank override; the energy rule picks it otherwise.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Ground truth for the error report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Ordered reductions, bit-reproducible across thread counts.
    #[arg(long, num_args = 0..=1, default_value = "true", default_missing_value = "true",
          value_parser = clap::builder::BoolishValueParser::new())]
    pub deterministic: bool,
    /// Operator family; read from the measurement manifest when omitted.
    #[arg(long, value_enum)]
    pub mode: Option<OpMode>,
    /// Measurements per frame (gaussian); defaults to the manifest value.
    #[arg(long)]
    pub m: Option<usize>,
    /// Operator seed (gaussian); defaults to the manifest value.
    #[arg(long)]
    pub op_seed: Option<u64>,
    /// Seed of the randomized SVD.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub exit_tol: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Reconstruction container; its directory is searched for components.
    #[arg(long, required_unless_present = "check_model")]
    pub recon: Option<PathBuf>,
    /// Also score the mean and mean+low-rank levels.
    #[arg(long)]
    pub components: bool,
    /// Check the generated components next to --truth.
    #[arg(long)]
    pub check_model: bool,
    /// Output file (default: eval.txt next to the reconstruction).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Mask(a) => mask(&a),
        Command::Measure(a) => measure(&a),
        Command::Recon(a) => recon(&a),
        Command::Eval(a) => eval(&a),
    }
}

fn required<T: Copy>(value: Option<T>, flag: &str, context: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required {context}")))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

/// Writes matrices into `dir` and records their digests.
fn write_outputs(
    dir: &Path,
    manifest: &mut Manifest,
    files: &[(&str, &ComplexMatrix)],
) -> Result<()> {
    for (name, m) in files {
        let path = dir.join(name);
        write_matrix(&path, m)?;
        manifest.hash_file(name, &path)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mut manifest = Manifest::new("simulate");
    match a.mode {
        SimMode::Lowrank => {
            let n = required(a.n, "n", "in lowrank mode")?;
            let r = required(a.r, "r", "in lowrank mode")?;
            let inst = gen_lowrank_instance(n, a.q, r, a.kappa, a.seed)?;
            for (k, v) in [
                ("mode", "lowrank".to_string()),
                ("n", n.to_string()),
                ("q", a.q.to_string()),
            ] {
                manifest.set(k, v);
            }
            manifest.set("r", r);
            manifest.set("kappa", a.kappa);
            manifest.set("seed", a.seed);
            manifest.set("incoherence", format!("{:e}", inst.incoherence));
            write_outputs(
                &a.out,
                &mut manifest,
                &[
                    ("truth.lcx", &inst.truth()),
                    ("lowrank.lcx", &inst.lowrank),
                    ("basis.lcx", &inst.basis),
                ],
            )?;
        }
        SimMode::Phantom => {
            let grid = a.grid.ok_or_else(|| {
                Error::InvalidParameter("--grid is required in phantom mode".into())
            })?;
            let period = a.period.unwrap_or(a.q);
            let inst = gen_phantom_stream(
                grid,
                a.q,
                period,
                a.motion,
                a.residual,
                a.residual_ratio,
                a.seed,
            )?;
            manifest.set("mode", "phantom");
            manifest.set("grid", grid);
            manifest.set("q", a.q);
            manifest.set("period", period);
            manifest.set("motion", a.motion);
            manifest.set("residual", format!("{:?}", a.residual).to_lowercase());
            manifest.set("residual_ratio", a.residual_ratio);
            manifest.set("seed", a.seed);
            let mean = ComplexMatrix::from_col_major(inst.n(), 1, inst.mean.clone())?;
            write_outputs(
                &a.out,
                &mut manifest,
                &[
                    ("truth.lcx", &inst.truth()),
                    ("mean.lcx", &mean),
                    ("lowrank.lcx", &inst.lowrank),
                    ("residual.lcx", &inst.residual),
                    ("basis.lcx", &inst.basis),
                ],
            )?;
        }
    }
    manifest.write(&a.out)
}

fn mask(a: &MaskArgs) -> Result<()> {
    let mut manifest = Manifest::new("mask");
    manifest.set("scheme", format!("{:?}", a.scheme).to_lowercase());
    manifest.set("grid", a.grid);
    manifest.set("q", a.q);
    let mask = match a.scheme {
        Scheme::Radial => {
            let lines = required(a.lines, "lines", "for radial masks")?;
            manifest.set("lines", lines);
            golden_angle_radial_masks(a.grid, a.q, lines)?
        }
        Scheme::Cartesian => {
            let reduction = required(a.reduction, "reduction", "for cartesian masks")?;
            manifest.set("reduction", reduction);
            manifest.set("seed", a.seed);
            cartesian_vd_masks(a.grid, a.q, reduction, a.seed)?
        }
        Scheme::Bernoulli => {
            let rho = required(a.rho, "rho", "for bernoulli masks")?;
            manifest.set("rho", rho);
            manifest.set("seed", a.seed);
            bernoulli_masks(a.grid, a.q, rho, a.seed)?
        }
    };
    let counts = mask.counts();
    manifest.set("samples.min", counts.iter().min().copied().unwrap_or(0));
    manifest.set("samples.max", counts.iter().max().copied().unwrap_or(0));
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("mask.lcx");
    write_mask(&path, &mask)?;
    manifest.hash_file("mask.lcx", &path)?;
    manifest.write(&a.out)
}

fn read_coils(path: &Path) -> Result<Vec<Vec<C64>>> {
    let m = read_matrix(path)?;
    Ok(m.columns().map(<[C64]>::to_vec).collect())
}

/// Operator stack shared by `measure` and `recon`.
struct Forward {
    ops: Vec<OpRef>,
    mode: OpMode,
    m: Option<usize>,
    seed: Option<u64>,
    coils: usize,
}

fn fourier_forward(
    mask_path: Option<&Path>,
    coils_path: Option<&Path>,
    n: usize,
    q: usize,
) -> Result<Forward> {
    let mask_path = mask_path
        .ok_or_else(|| Error::InvalidParameter("--mask is required in fourier mode".into()))?;
    let mask: SamplingMask = read_mask(mask_path)?;
    if mask.grid().len() != n || mask.q() != q {
        return Err(Error::DimensionMismatch(format!(
            "mask is {} with {} frames, data is n = {n} with {q} frames",
            mask.grid(),
            mask.q()
        )));
    }
    let coils = coils_path.map(read_coils).transpose()?;
    let ops = fourier_stack(&mask, coils.as_deref())?;
    Ok(Forward {
        ops,
        mode: OpMode::Fourier,
        m: None,
        seed: None,
        coils: coils.map_or(1, |c| c.len()),
    })
}

fn gaussian_forward(n: usize, m: usize, q: usize, seed: u64) -> Result<Forward> {
    Ok(Forward {
        ops: gaussian_stack(n, m, q, seed)?,
        mode: OpMode::Gaussian,
        m: Some(m),
        seed: Some(seed),
        coils: 1,
    })
}

impl Forward {
    fn record(&self, manifest: &mut Manifest) {
        manifest.set("op.mode", self.mode.name());
        if let Some(m) = self.m {
            manifest.set("op.m", m);
        }
        if let Some(s) = self.seed {
            manifest.set("op.seed", s);
        }
        manifest.set("op.coils", self.coils);
    }

    fn lengths(&self) -> Vec<usize> {
        self.ops.iter().map(|op| op.output_dim()).collect()
    }
}

fn measure(a: &MeasureArgs) -> Result<()> {
    for path in [Some(&a.truth), a.mask.as_ref(), a.coils.as_ref()]
        .into_iter()
        .flatten()
    {
        check_recorded_hash(path)?;
    }
    let truth = read_matrix(&a.truth)?;
    let (n, q) = truth.shape();
    let forward = match a.mode {
        OpMode::Fourier => fourier_forward(a.mask.as_deref(), a.coils.as_deref(), n, q)?,
        OpMode::Gaussian => {
            gaussian_forward(n, required(a.m, "m", "in gaussian mode")?, q, a.seed)?
        }
    };
    let y = apply_forward_stack(&forward.ops, &truth)?;
    fs::create_dir_all(&a.out)?;
    let mut manifest = Manifest::new("measure");
    forward.record(&mut manifest);
    manifest.set("n", n);
    manifest.set("q", q);
    manifest.set("truth", file_name(&a.truth));
    manifest.hash_file("truth", &a.truth)?;
    if let Some(p) = &a.mask {
        manifest.hash_file("mask", p)?;
    }
    if let Some(p) = &a.coils {
        manifest.hash_file("coils", p)?;
    }
    let path = a.out.join("meas.lcx");
    write_matrix(&path, &y.to_padded_matrix())?;
    manifest.hash_file("meas.lcx", &path)?;
    manifest.write(&a.out)
}

fn recon_config(a: &ReconArgs) -> AltGdminConfig {
    let base = AltGdminConfig::default();
    AltGdminConfig {
        rank_override: a.rank,
        seed: a.seed,
        max_iters: a.max_iters.unwrap_or(base.max_iters),
        exit_tol: a.exit_tol.unwrap_or(base.exit_tol),
        reduction: if a.deterministic {
            ReductionMode::Ordered
        } else {
            ReductionMode::Unordered
        },
        ..base
    }
}

/// Rebuilds the measurement operators from flags and the measurement manifest.
fn recon_forward(
    a: &ReconArgs,
    recorded: Option<&Manifest>,
    n: usize,
    q: usize,
) -> Result<Forward> {
    let get = |key: &str| recorded.and_then(|m| m.get(key));
    let parse_num = |key: &str| -> Result<Option<u64>> {
        get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Format(format!("manifest {key}={v} is not an integer")))
            })
            .transpose()
    };
    let mode = match (a.mode, get("op.mode")) {
        (Some(m), _) => m,
        (None, Some("fourier")) => OpMode::Fourier,
        (None, Some("gaussian")) => OpMode::Gaussian,
        (None, Some(other)) => {
            return Err(Error::Format(format!(
                "manifest op.mode={other} is unknown"
            )))
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "no measurement manifest found; pass --mode (and --m, --op-seed for gaussian)"
                    .into(),
            ))
        }
    };
    if let Some(manifest) = recorded {
        if let Some(p) = &a.mask {
            check_bound_hash(manifest, "sha256.mask", p)?;
        }
        if let Some(p) = &a.coils {
            check_bound_hash(manifest, "sha256.coils", p)?;
        }
    }
    match mode {
        OpMode::Fourier => fourier_forward(a.mask.as_deref(), a.coils.as_deref(), n, q),
        OpMode::Gaussian => {
            let m = match a.m {
                Some(m) => m,
                None => parse_num("op.m")?.ok_or_else(|| {
                    Error::InvalidParameter("--m is required in gaussian mode".into())
                })? as usize,
            };
            let seed = match a.op_seed {
                Some(s) => s,
                None => parse_num("op.seed")?.unwrap_or(0),
            };
            gaussian_forward(n, m, q, seed)
        }
    }
}

/// Image size: from the manifest, the mask, or the truth, in that order.
fn image_size(a: &ReconArgs, recorded: Option<&Manifest>) -> Result<usize> {
    if let Some(n) = recorded.and_then(|m| m.get("n")) {
        return n
            .parse()
            .map_err(|_| Error::Format(format!("manifest n={n} is not an integer")));
    }
    if let Some(p) = &a.mask {
        return Ok(read_mask(p)?.grid().len());
    }
    if let Some(p) = &a.truth {
        return Ok(read_matrix(p)?.rows());
    }
    Err(Error::InvalidParameter(
        "cannot infer the image size; pass --mask or --truth".into(),
    ))
}

fn write_reports(dir: &Path, report: &ReconReport) -> Result<()> {
    fs::write(dir.join("report.txt"), report.to_text())?;
    fs::write(dir.join("report.json"), report.to_json())?;
    Ok(())
}

fn recon(a: &ReconArgs) -> Result<()> {
    check_recorded_hash(&a.meas)?;
    let recorded = Manifest::beside(&a.meas)?;
    let cfg = recon_config(a);
    cfg.validate()?;
    let mut reader = ColumnReader::open(&a.meas)?;
    let q = reader.cols();
    let n = image_size(a, recorded.as_ref())?;
    let forward = recon_forward(a, recorded.as_ref(), n, q)?;
    let lengths = forward.lengths();
    if let Some(&len) = lengths.iter().find(|&&l| l > reader.rows()) {
        return Err(Error::DimensionMismatch(format!(
            "operators produce {len} measurements per frame, container has {} rows",
            reader.rows()
        )));
    }
    let truth = a.truth.as_ref().map(|p| read_matrix(p)).transpose()?;
    let alpha = match a.algo {
        Algo::Minibatch | Algo::Online => {
            Some(required(a.alpha, "alpha", "for minibatch and online")?)
        }
        _ => None,
    };

    fs::create_dir_all(&a.out)?;
    let mut manifest = Manifest::new("recon");
    manifest.set("algo", a.algo.name());
    forward.record(&mut manifest);
    manifest.set("n", n);
    manifest.set("q", q);
    if let Some(alpha) = alpha {
        manifest.set("alpha", alpha);
    }
    manifest.set("rank", a.rank.map_or("auto".to_string(), |r| r.to_string()));
    manifest.set("seed", a.seed);
    manifest.set("max_iters", cfg.max_iters);
    manifest.set("exit_tol", cfg.exit_tol);
    manifest.set("deterministic", a.deterministic);
    manifest.hash_file("meas", &a.meas)?;
    for (label, path) in [("mask", &a.mask), ("coils", &a.coils), ("truth", &a.truth)] {
        if let Some(p) = path {
            manifest.hash_file(label, p)?;
        }
    }

    let report = if a.algo == Algo::Online {
        recon_online(
            &mut reader,
            &forward.ops,
            &lengths,
            alpha.unwrap_or(1),
            &cfg,
            truth.as_ref(),
            &a.out,
            &mut manifest,
        )?
    } else {
        let matrix = read_matrix(&a.meas)?;
        let y = MeasurementSet::from_padded_matrix(&matrix, &lengths)?;
        recon_batch(
            a.algo,
            &y,
            &forward.ops,
            alpha,
            &cfg,
            truth.as_ref(),
            &a.out,
            &mut manifest,
        )?
    };
    write_reports(&a.out, &report)?;
    println!("Error (Time)={}", report.error_time());
    manifest.write(&a.out)
}

#[allow(clippy::too_many_arguments)]
fn recon_batch(
    algo: Algo,
    y: &MeasurementSet,
    ops: &[OpRef],
    alpha: Option<usize>,
    cfg: &AltGdminConfig,
    truth: Option<&ComplexMatrix>,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<ReconReport> {
    match algo {
        Algo::Minibatch => {
            let mb = run_minibatch_st(y, ops, &MinibatchOptions::new(alpha.unwrap_or(1)), cfg)?;
            let mut report = mb.report.clone();
            let full = mb.reconstruction();
            if let Some(t) = truth {
                let means = mb.mean_matrix();
                let smooth = means.add(&mb.lowrank());
                evaluate_levels(&mut report, Some((&means, &smooth)), &full, t)?;
            }
            let sizes: Vec<String> = mb.batches.iter().map(|b| b.q().to_string()).collect();
            manifest.set("batch_frames", sizes.join(","));
            write_outputs(
                out,
                manifest,
                &[
                    ("recon.lcx", &full),
                    ("mean.lcx", &mb.means()),
                    ("lowrank.lcx", &mb.lowrank()),
                    ("residual.lcx", &mb.residual()),
                ],
            )?;
            Ok(report)
        }
        _ => {
            let options = match algo {
                Algo::Mri => PipelineOptions::mri(),
                Algo::Mri2 => PipelineOptions::mri2(),
                _ => PipelineOptions::plain(),
            };
            let run = run_three_level(y, ops, cfg, &options)?;
            let mut report = run.report;
            if let Some(t) = truth {
                evaluate_model(&mut report, &run.model, t)?;
            }
            let full = run.model.assemble();
            if algo == Algo::Altgdmin {
                write_outputs(out, manifest, &[("recon.lcx", &full)])?;
            } else {
                let mean = ComplexMatrix::from_col_major(run.model.n(), 1, run.model.mean.clone())?;
                write_outputs(
                    out,
                    manifest,
                    &[
                        ("recon.lcx", &full),
                        ("mean.lcx", &mean),
                        ("lowrank.lcx", &run.model.lowrank),
                        ("residual.lcx", &run.model.residual),
                    ],
                )?;
            }
            Ok(report)
        }
    }
}

/// Streams frames from disk: a batch start on the first `alpha` frames, then
/// one frame at a time, appending each reconstructed column as it is produced.
#[allow(clippy::too_many_arguments)]
fn recon_online(
    reader: &mut ColumnReader,
    ops: &[OpRef],
    lengths: &[usize],
    alpha: usize,
    cfg: &AltGdminConfig,
    truth: Option<&ComplexMatrix>,
    out: &Path,
    manifest: &mut Manifest,
) -> Result<ReconReport> {
    let q = reader.cols();
    if alpha == 0 || alpha > q {
        return Err(Error::InvalidParameter(format!(
            "initial batch of {alpha} frames for a {q}-frame stream"
        )));
    }
    let start = Instant::now();
    let mut frame = |k: usize| -> Result<Vec<C64>> {
        let mut col = reader.column(k)?;
        col.truncate(lengths[k]);
        Ok(col)
    };
    let first = MeasurementSet::new((0..alpha).map(&mut frame).collect::<Result<Vec<_>>>()?)?;
    let (mut tracker, init) = OnlineTracker::initialize(&first, &ops[..alpha], cfg)?;
    let n = tracker.mean().len();
    let mean = ComplexMatrix::from_col_major(n, 1, tracker.mean().to_vec())?;
    write_matrix(&out.join("mean.lcx"), &mean)?;

    let names = ["recon.lcx", "lowrank.lcx", "residual.lcx"];
    let mut writers = names
        .iter()
        .map(|name| ColumnWriter::create(&out.join(name), n, q))
        .collect::<Result<Vec<_>>>()?;
    let first_full = init.model.assemble();
    for k in 0..alpha {
        writers[0].push(first_full.col(k))?;
        writers[1].push(init.model.lowrank.col(k))?;
        writers[2].push(init.model.residual.col(k))?;
    }
    let mut report = init.report;
    report.algorithm = "online".to_string();
    let (mut low_cols, mut res_cols) = (Vec::new(), Vec::new());
    for k in alpha..q {
        let y = frame(k)?;
        let f = tracker.push(&y, &ops[k])?;
        let full: Vec<C64> = (0..n)
            .map(|i| tracker.mean()[i] + f.lowrank[i] + f.residual[i])
            .collect();
        writers[0].push(&full)?;
        writers[1].push(&f.lowrank)?;
        writers[2].push(&f.residual)?;
        report.frame_latencies.push(f.latency);
        low_cols.push(f.lowrank);
        res_cols.push(f.residual);
    }
    for w in writers {
        w.finish()?;
    }
    report.total_seconds = start.elapsed().as_secs_f64();

    manifest.hash_file("mean.lcx", &out.join("mean.lcx"))?;
    for name in names {
        manifest.hash_file(name, &out.join(name))?;
    }
    if let Some(t) = truth {
        let mut lowrank = init.model.lowrank;
        let mut residual = init.model.residual;
        if !low_cols.is_empty() {
            lowrank =
                ComplexMatrix::hstack(&[lowrank, ComplexMatrix::from_columns(n, &low_cols)?])?;
            residual =
                ComplexMatrix::hstack(&[residual, ComplexMatrix::from_columns(n, &res_cols)?])?;
        }
        let model = ThreeLevelModel::new(tracker.mean().to_vec(), lowrank, residual)?;
        evaluate_model(&mut report, &model, t)?;
    }
    Ok(report)
}

/// Expands stored means (one column, or one per batch) to one column per frame.
fn expand_means(
    means: &ComplexMatrix,
    q: usize,
    batch_frames: Option<&str>,
) -> Result<ComplexMatrix> {
    let sizes: Vec<usize> = match (means.cols(), batch_frames) {
        (1, _) => vec![q],
        (_, Some(list)) => list
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Format(format!("bad batch_frames entry {s:?}")))
            })
            .collect::<Result<_>>()?,
        (c, None) => {
            return Err(Error::Format(format!(
                "{c} mean columns but no batch layout in the manifest"
            )))
        }
    };
    if sizes.len() != means.cols() || sizes.iter().sum::<usize>() != q {
        return Err(Error::DimensionMismatch(format!(
            "batch layout {sizes:?} does not fit {} mean columns and {q} frames",
            means.cols()
        )));
    }
    let mut out = ComplexMatrix::zeros(means.rows(), q);
    let mut k = 0;
    for (b, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            out.set_col(k, means.col(b));
            k += 1;
        }
    }
    Ok(out)
}

fn sibling(file: &Path, name: &str) -> PathBuf {
    file.parent().unwrap_or(Path::new(".")).join(name)
}

/// Verifies `Z* = z̄ 1ᵀ + X* + E*` and the energy ordering of the levels.
fn check_model(truth_path: &Path, truth: &ComplexMatrix) -> Result<Vec<String>> {
    let mean = read_matrix(&sibling(truth_path, "mean.lcx"))?;
    let lowrank = read_matrix(&sibling(truth_path, "lowrank.lcx"))?;
    let residual = read_matrix(&sibling(truth_path, "residual.lcx"))?;
    let q = truth.cols();
    let means = expand_means(&mean, q, None)?;
    let sum = means.add(&lowrank).add(&residual);
    if sum.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(
            "components do not match the truth shape".into(),
        ));
    }
    let mismatch = truth.sub(&sum).frobenius_norm() / truth.frobenius_norm().max(f64::MIN_POSITIVE);
    let (em, el, er) = (
        means.frobenius_norm(),
        lowrank.frobenius_norm(),
        residual.frobenius_norm(),
    );
    let lines = vec![
        format!("model.sum_mismatch={mismatch:e}"),
        format!("model.energy.mean={em:e}"),
        format!("model.energy.lowrank={el:e}"),
        format!("model.energy.residual={er:e}"),
    ];
    if mismatch > 1e-12 {
        return Err(Error::Format(format!(
            "components do not add up to the truth (relative gap {mismatch:e})"
        )));
    }
    if !(em > el && el > er) {
        return Err(Error::Format(format!(
            "energy ordering violated: mean {em:e}, low-rank {el:e}, residual {er:e}"
        )));
    }
    Ok(lines)
}

fn eval(a: &EvalArgs) -> Result<()> {
    check_recorded_hash(&a.truth)?;
    let truth = read_matrix(&a.truth)?;
    let mut lines = Vec::new();
    if a.check_model {
        lines.extend(check_model(&a.truth, &truth)?);
        lines.push("model.check=pass".to_string());
    }
    if let Some(recon_path) = &a.recon {
        check_recorded_hash(recon_path)?;
        let xhat = read_matrix(recon_path)?;
        let (error, dists) = ns_mse(&truth, &xhat)?;
        let report_path = sibling(recon_path, "report.json");
        let seconds = if report_path.is_file() {
            let report: ReconReport = serde_json::from_str(&fs::read_to_string(&report_path)?)
                .map_err(|e| Error::Format(format!("{}: {e}", report_path.display())))?;
            Some(report.total_seconds)
        } else {
            None
        };
        lines.push(format!("error={error:e}"));
        if a.components {
            lines.extend(component_errors(recon_path, &truth)?);
        }
        for (k, d) in dists.iter().enumerate() {
            lines.push(format!("dist.{k}={d:e}"));
        }
        let time = seconds.map_or("NA".to_string(), |s| format!("{s:.2}"));
        lines.push(format!("Error (Time)={error:.4} ({time})"));
    }
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    print!("{text}");
    let out = match (&a.out, &a.recon) {
        (Some(p), _) => p.clone(),
        (None, Some(r)) => sibling(r, "eval.txt"),
        (None, None) => sibling(&a.truth, "eval.txt"),
    };
    fs::write(out, text)?;
    Ok(())
}

/// Errors of the mean-only and mean-plus-low-rank levels, when their files exist.
fn component_errors(recon_path: &Path, truth: &ComplexMatrix) -> Result<Vec<String>> {
    let (mean_path, low_path) = (
        sibling(recon_path, "mean.lcx"),
        sibling(recon_path, "lowrank.lcx"),
    );
    if !mean_path.is_file() || !low_path.is_file() {
        return Ok(vec!["error.components=unavailable".to_string()]);
    }
    let manifest = Manifest::beside(recon_path)?;
    let means = expand_means(
        &read_matrix(&mean_path)?,
        truth.cols(),
        manifest.as_ref().and_then(|m| m.get("batch_frames")),
    )?;
    let smooth = means.add(&read_matrix(&low_path)?);
    Ok(vec![
        format!("error.mean={:e}", ns_mse(truth, &means)?.0),
        format!("error.mean+lowrank={:e}", ns_mse(truth, &smooth)?.0),
    ])
}
