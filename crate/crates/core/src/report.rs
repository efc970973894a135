//! Reconstruction reports in `key=value` text and JSON form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::altgdmin::{AltGdminConfig, IterationRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub error: f64,
}

/// `σ₁/σ_r̂` of the full reconstruction and of its low-rank part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionDiagnostics {
    pub full: f64,
    pub lowrank: f64,
}

/// Frobenius norms of the three levels; the mean is reported as `√q ‖z̄‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDiagnostics {
    pub mean: f64,
    pub lowrank: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub index: usize,
    pub first_frame: usize,
    pub frames: usize,
    pub iterations: usize,
    /// `SD(U_prev, U)/√r` against the previous batch's basis.
    pub subspace_drift: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub algorithm: String,
    pub config: AltGdminConfig,
    pub rank: usize,
    pub iterations: usize,
    pub converged: bool,
    pub step_size: f64,
    pub trace: Vec<IterationRecord>,
    pub stage_timings: Vec<StageTiming>,
    pub total_seconds: f64,
    pub mec_iterations: Option<usize>,
    pub condition: Option<ConditionDiagnostics>,
    pub energy: Option<EnergyDiagnostics>,
    pub batches: Vec<BatchRecord>,
    pub frame_latencies: Vec<f64>,
    pub error: Option<f64>,
    pub frame_dists: Vec<f64>,
    pub stage_errors: Vec<StageError>,
}

/// Keys whose values are wall-clock measurements.
pub const TIMING_KEYS: &[&str] = &["time", "stage.", "batch.", "latency.", "Error (Time)"];

impl ReconReport {
    pub fn new(algorithm: &str, config: &AltGdminConfig) -> Self {
        ReconReport {
            algorithm: algorithm.to_string(),
            config: config.clone(),
            rank: 0,
            iterations: 0,
            converged: false,
            step_size: 0.0,
            trace: Vec::new(),
            stage_timings: Vec::new(),
            total_seconds: 0.0,
            mec_iterations: None,
            condition: None,
            energy: None,
            batches: Vec::new(),
            frame_latencies: Vec::new(),
            error: None,
            frame_dists: Vec::new(),
            stage_errors: Vec::new(),
        }
    }

    pub fn add_stage(&mut self, stage: &str, seconds: f64) {
        self.stage_timings.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
    }

    /// The conventional `Error (Time)` pair, e.g. `0.0249 (2.60)`.
    pub fn error_time(&self) -> String {
        match self.error {
            Some(e) => format!("{e:.4} ({:.2})", self.total_seconds),
            None => format!("NA ({:.2})", self.total_seconds),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        let c = &self.config;
        kv("algorithm", self.algorithm.clone());
        kv("config.trunc_const", c.trunc_const.to_string());
        kv("config.energy_pct", c.energy_pct.to_string());
        kv("config.step_factor", c.step_factor.to_string());
        kv("config.max_iters", c.max_iters.to_string());
        kv("config.exit_tol", c.exit_tol.to_string());
        kv(
            "config.rank_override",
            c.rank_override
                .map_or("none".to_string(), |r| r.to_string()),
        );
        kv("config.seed", c.seed.to_string());
        kv(
            "config.reduction",
            format!("{:?}", c.reduction).to_lowercase(),
        );
        kv("rank", self.rank.to_string());
        kv("iterations", self.iterations.to_string());
        kv("converged", self.converged.to_string());
        kv("step_size", format!("{:e}", self.step_size));
        for r in &self.trace {
            kv(
                &format!("trace.{}", r.iteration),
                format!("{:e} {:e} {:e}", r.subspace_change, r.residual, r.step_norm),
            );
        }
        if let Some(n) = self.mec_iterations {
            kv("mec_iterations", n.to_string());
        }
        if let Some(d) = self.condition {
            kv("kappa.full", format!("{:e}", d.full));
            kv("kappa.lowrank", format!("{:e}", d.lowrank));
        }
        if let Some(e) = self.energy {
            kv("energy.mean", format!("{:e}", e.mean));
            kv("energy.lowrank", format!("{:e}", e.lowrank));
            kv("energy.residual", format!("{:e}", e.residual));
        }
        for b in &self.batches {
            let drift = b
                .subspace_drift
                .map_or("none".to_string(), |d| format!("{d:e}"));
            kv(
                &format!("batch.{}", b.index),
                format!(
                    "{} {} {} {} {:.6}",
                    b.first_frame, b.frames, b.iterations, drift, b.seconds
                ),
            );
        }
        for (k, l) in self.frame_latencies.iter().enumerate() {
            kv(&format!("latency.{k}"), format!("{l:.6e}"));
        }
        for s in &self.stage_timings {
            kv(&format!("stage.{}", s.stage), format!("{:.6}", s.seconds));
        }
        kv("time", format!("{:.6}", self.total_seconds));
        if let Some(e) = self.error {
            kv("error", format!("{e:e}"));
            for (k, d) in self.frame_dists.iter().enumerate() {
                kv(&format!("dist.{k}"), format!("{d:e}"));
            }
            for s in &self.stage_errors {
                kv(&format!("error.{}", s.stage), format!("{:e}", s.error));
            }
        }
        kv("Error (Time)", self.error_time());
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }
}

/// Drops the lines of a text report whose values depend on wall-clock time.
pub fn strip_timings(text: &str) -> String {
    text.lines()
        .filter(|l| {
            let key = l.split('=').next().unwrap_or("");
            !TIMING_KEYS
                .iter()
                .any(|t| key == *t || (t.ends_with('.') && key.starts_with(t)))
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_time_format() {
        let mut r = ReconReport::new("mri", &AltGdminConfig::default());
        r.total_seconds = 2.6;
        assert_eq!(r.error_time(), "NA (2.60)");
        r.error = Some(0.02491);
        assert_eq!(r.error_time(), "0.0249 (2.60)");
        assert!(r.to_text().ends_with("Error (Time)=0.0249 (2.60)\n"));
    }

    #[test]
    fn text_is_key_value_and_json_round_trips() {
        let mut r = ReconReport::new("mri2", &AltGdminConfig::default());
        r.add_stage("mean", 0.5);
        r.frame_latencies = vec![1e-3, 2e-3];
        r.error = Some(0.1);
        r.frame_dists = vec![0.05, 0.05];
        for line in r.to_text().lines() {
            assert!(line.contains('='), "{line}");
        }
        let back: ReconReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let stripped = strip_timings(&r.to_text());
        assert!(
            !stripped.contains("stage.mean")
                && !stripped.contains("latency.")
                && !stripped.contains("time=")
        );
        assert!(stripped.contains("dist.1=") && stripped.contains("algorithm=mri2"));
    }
}
