//! Synthetic instances with known ground truth, and the normalized
//! scale-invariant error used to score reconstructions.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, norm_sqr, ZERO};
use crate::linalg::{qr_orthonormalize, row_dft, ComplexMatrix, OpRef, C64};
use crate::operators::{apply_forward_stack, derive_seed, MeasurementSet};
use crate::sampling::Grid;

/// Incoherence above which a low-rank instance is redrawn.
pub const MAX_INCOHERENCE: f64 = 3.0;
const MAX_REDRAWS: u64 = 100;

/// Rank of the phantom's moving component.
pub const PHANTOM_RANK: usize = 3;
/// `‖X*‖_F / (√q ‖z̄*‖)` for phantoms.
pub const PHANTOM_LOWRANK_RATIO: f64 = 0.2;
/// Default `‖E*‖_F / ‖X*‖_F` for phantoms with a residual.
pub const PHANTOM_RESIDUAL_RATIO: f64 = 0.1;
/// Largest number of nonzero temporal frequencies per affected pixel.
pub const SPARSE_TEMPORAL_NNZ: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    None,
    Unstructured,
    TemporalSparse,
}

impl std::str::FromStr for ResidualMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ResidualMode::None),
            "unstructured" => Ok(ResidualMode::Unstructured),
            "temporal-sparse" => Ok(ResidualMode::TemporalSparse),
            _ => Err(Error::InvalidParameter(format!(
                "residual mode must be none, unstructured or temporal-sparse, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InstanceParams {
    LowRank {
        n: usize,
        q: usize,
        r: usize,
        kappa: f64,
        seed: u64,
    },
    Phantom {
        grid: Grid,
        q: usize,
        period: usize,
        motion: f64,
        residual: ResidualMode,
        residual_ratio: f64,
        seed: u64,
    },
}

/// Ground truth `Z* = z̄* 1ᵀ + X* + E*` with every component kept.
#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub params: InstanceParams,
    pub mean: Vec<C64>,
    pub lowrank: ComplexMatrix,
    pub residual: ComplexMatrix,
    /// Column space of `X*`.
    pub basis: ComplexMatrix,
    pub singular_values: Vec<f64>,
    /// Measured `μ = max_k ‖b*_k‖ / (σ_max √(r/q))`.
    pub incoherence: f64,
}

impl SyntheticInstance {
    pub fn n(&self) -> usize {
        self.lowrank.rows()
    }

    pub fn q(&self) -> usize {
        self.lowrank.cols()
    }

    /// The full sequence `Z*`.
    pub fn truth(&self) -> ComplexMatrix {
        let mut z = self.lowrank.add(&self.residual);
        for k in 0..z.cols() {
            for (zi, mi) in z.col_mut(k).iter_mut().zip(&self.mean) {
                *zi += mi;
            }
        }
        z
    }

    /// Noiseless measurements `y_k = A_k z*_k`.
    pub fn measure(&self, ops: &[OpRef]) -> Result<MeasurementSet> {
        apply_forward_stack(ops, &self.truth())
    }
}

/// Exact rank-`r` matrix with singular values log-spaced from 1 down to `1/κ`.
///
/// Both factors come from QR of seeded complex Gaussian matrices. If the
/// right factor is more coherent than [`MAX_INCOHERENCE`], the instance is
/// redrawn from a derived seed.
pub fn gen_lowrank_instance(
    n: usize,
    q: usize,
    r: usize,
    kappa: f64,
    seed: u64,
) -> Result<SyntheticInstance> {
    if r == 0 || r > n.min(q) {
        return Err(Error::InvalidParameter(format!(
            "rank {r} outside [1, min({n}, {q})]"
        )));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "condition number must be >= 1, got {kappa}"
        )));
    }
    let sigmas: Vec<f64> = (0..r)
        .map(|j| {
            let t = if r == 1 {
                0.0
            } else {
                j as f64 / (r - 1) as f64
            };
            kappa.powf(-t)
        })
        .collect();
    let mut best = None;
    for attempt in 0..MAX_REDRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(if attempt == 0 {
            seed
        } else {
            derive_seed(seed, attempt)
        });
        let (u, _) = qr_orthonormalize(&ComplexMatrix::random_complex_normal(n, r, &mut rng))?;
        let (v, _) = qr_orthonormalize(&ComplexMatrix::random_complex_normal(q, r, &mut rng))?;
        // B* = Σ* V*ᴴ, so ‖b*_k‖² = Σ_j σ_j² |v_kj|².
        let max_col = (0..q)
            .map(|k| {
                (0..r)
                    .map(|j| sigmas[j].powi(2) * v[(k, j)].norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        let mu = max_col / (sigmas[0] * (r as f64 / q as f64).sqrt());
        best = Some((u, v, mu));
        if mu <= MAX_INCOHERENCE {
            break;
        }
    }
    let (u, v, mu) = best.expect("at least one draw");
    let b = ComplexMatrix::from_fn(r, q, |j, k| v[(k, j)].conj() * sigmas[j]);
    Ok(SyntheticInstance {
        params: InstanceParams::LowRank {
            n,
            q,
            r,
            kappa,
            seed,
        },
        mean: vec![ZERO; n],
        lowrank: u.matmul(&b),
        residual: ComplexMatrix::zeros(n, q),
        basis: u,
        singular_values: sigmas,
        incoherence: mu,
    })
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    value: f64,
}

/// Soft-edged indicator `s(ρ) = 1 / (1 + exp((ρ − 1)/w))` with `ρ` the
/// normalized squared radius, and its derivatives in `x` and `y`.
fn soft_ellipse(e: &Ellipse, y: f64, x: f64, width: f64) -> (f64, f64, f64) {
    let dy = (y - e.cy) / e.ay;
    let dx = (x - e.cx) / e.ax;
    let rho = dy * dy + dx * dx;
    let s = 1.0 / (1.0 + ((rho - 1.0) / width).exp());
    let ds = -s * (1.0 - s) / width;
    (s, ds * 2.0 * dx / e.ax, ds * 2.0 * dy / e.ay)
}

/// Moving-ellipse phantom on `grid` with `q` frames and one motion cycle.
///
/// The static background is a set of nested ellipses. The rank-3 dynamic
/// part is the first-order motion of a soft ellipse along a circular path
/// (`∂x`, `∂y` components with temporal `cos`, `sin`) plus a pulsation of
/// the ellipse itself at twice the frequency. `motion` is the energy of each
/// translation component relative to the pulsation.
pub fn gen_phantom_sequence(
    grid: Grid,
    q: usize,
    motion: f64,
    residual: ResidualMode,
    seed: u64,
) -> Result<SyntheticInstance> {
    gen_phantom_stream(grid, q, q, motion, residual, PHANTOM_RESIDUAL_RATIO, seed)
}

/// [`gen_phantom_sequence`] with the motion cycle repeating every `period`
/// frames and `‖E*‖ = residual_ratio · ‖X*‖`.
pub fn gen_phantom_stream(
    grid: Grid,
    q: usize,
    period: usize,
    motion: f64,
    residual: ResidualMode,
    residual_ratio: f64,
    seed: u64,
) -> Result<SyntheticInstance> {
    if !(residual_ratio >= 0.0) || !residual_ratio.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "residual ratio must be finite and non-negative, got {residual_ratio}"
        )));
    }
    if period < 4 {
        return Err(Error::InvalidParameter(format!(
            "motion period must be at least 4 frames, got {period}"
        )));
    }
    if grid.ny < 32 || grid.nx < 32 {
        return Err(Error::InvalidParameter(format!(
            "phantom grid must be at least 32x32, got {grid}"
        )));
    }
    if q < 8 {
        return Err(Error::InvalidParameter(format!(
            "phantom needs at least 8 frames, got {q}"
        )));
    }
    if !(motion > 0.0) || !motion.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "motion amplitude must be positive, got {motion}"
        )));
    }
    let n = grid.len();
    let (ny, nx) = (grid.ny as f64, grid.nx as f64);
    let pixel = |i: usize| ((i / grid.nx) as f64, (i % grid.nx) as f64);

    let background = [
        Ellipse {
            cy: ny / 2.0,
            cx: nx / 2.0,
            ay: 0.42 * ny,
            ax: 0.36 * nx,
            value: 1.0,
        },
        Ellipse {
            cy: 0.45 * ny,
            cx: 0.5 * nx,
            ay: 0.3 * ny,
            ax: 0.26 * nx,
            value: -0.4,
        },
        Ellipse {
            cy: 0.35 * ny,
            cx: 0.38 * nx,
            ay: 0.08 * ny,
            ax: 0.06 * nx,
            value: 0.5,
        },
        Ellipse {
            cy: 0.62 * ny,
            cx: 0.64 * nx,
            ay: 0.05 * ny,
            ax: 0.09 * nx,
            value: 0.3,
        },
    ];
    let mut mean: Vec<C64> = (0..n)
        .map(|i| {
            let (y, x) = pixel(i);
            let v: f64 = background
                .iter()
                .map(|e| e.value * soft_ellipse(e, y, x, 0.05).0)
                .sum();
            C64::new(v, 0.0)
        })
        .collect();
    let mean_norm = norm_sqr(&mean).sqrt();
    mean.iter_mut().for_each(|z| *z /= mean_norm);

    let heart = Ellipse {
        cy: 0.52 * ny,
        cx: 0.48 * nx,
        ay: 0.12 * ny,
        ax: 0.1 * nx,
        value: 1.0,
    };
    let mut spatial = ComplexMatrix::zeros(n, PHANTOM_RANK);
    for i in 0..n {
        let (y, x) = pixel(i);
        let (s, sx, sy) = soft_ellipse(&heart, y, x, 0.1);
        spatial[(i, 0)] = C64::new(sx, 0.0);
        spatial[(i, 1)] = C64::new(sy, 0.0);
        spatial[(i, 2)] = C64::new(s, 0.0);
    }
    // Translation components carry `motion` times the energy of the pulsation.
    for (j, weight) in [motion.sqrt(), motion.sqrt(), 1.0].into_iter().enumerate() {
        let c = weight / crate::linalg::matrix::norm(spatial.col(j));
        spatial.col_mut(j).iter_mut().for_each(|z| *z *= c);
    }
    let omega = 2.0 * std::f64::consts::PI / period as f64;
    let temporal = ComplexMatrix::from_fn(PHANTOM_RANK, q, |j, k| {
        let t = omega * k as f64;
        C64::new(
            match j {
                0 => t.cos(),
                1 => t.sin(),
                _ => (2.0 * t).cos(),
            },
            0.0,
        )
    });
    let mut lowrank = spatial.matmul(&temporal);
    let target = PHANTOM_LOWRANK_RATIO * (q as f64).sqrt();
    lowrank.scale(C64::new(target / lowrank.frobenius_norm(), 0.0));
    let (basis, _) = qr_orthonormalize(&spatial)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let residual_target = residual_ratio * lowrank.frobenius_norm();
    let mut res = match residual {
        ResidualMode::None => ComplexMatrix::zeros(n, q),
        ResidualMode::Unstructured => ComplexMatrix::random_complex_normal(n, q, &mut rng),
        ResidualMode::TemporalSparse => {
            row_dft(&sparse_transient(grid, q, period, &heart, &mut rng))
        }
    };
    if residual != ResidualMode::None {
        res.scale(C64::new(residual_target / res.frobenius_norm(), 0.0));
    }

    Ok(SyntheticInstance {
        params: InstanceParams::Phantom {
            grid,
            q,
            period,
            motion,
            residual,
            residual_ratio,
            seed,
        },
        mean,
        lowrank,
        residual: res,
        basis,
        singular_values: Vec::new(),
        incoherence: f64::NAN,
    })
}

/// Temporal spectra supported on a small disk near the moving ellipse,
/// with at most [`SPARSE_TEMPORAL_NNZ`] nonzero frequencies per pixel.
/// When `period` divides `q` only harmonics of the period are used, so the
/// transient repeats with the motion.
fn sparse_transient(
    grid: Grid,
    q: usize,
    period: usize,
    near: &Ellipse,
    rng: &mut ChaCha8Rng,
) -> ComplexMatrix {
    let stride = if q % period == 0 { q / period } else { 1 };
    let bins = q / stride;
    let radius = (grid.ny.min(grid.nx) as f64 / 16.0).max(2.0);
    let cy = near.cy + near.ay * rng.random_range(-0.5..0.5);
    let cx = near.cx + near.ax * rng.random_range(-0.5..0.5);
    let mut s = ComplexMatrix::zeros(grid.len(), q);
    let nnz = SPARSE_TEMPORAL_NNZ.min(bins);
    for i in 0..grid.len() {
        let (y, x) = ((i / grid.nx) as f64, (i % grid.nx) as f64);
        if (y - cy).powi(2) + (x - cx).powi(2) > radius * radius {
            continue;
        }
        let count = rng.random_range(1..=nnz);
        for f in sample(rng, bins, count) {
            s[(i, f * stride)] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
    }
    s
}

/// `dist²(x*, x̂) = ‖x* − x̂ c‖²` with the optimal complex scale `c = x̂ᴴx*/‖x̂‖²`.
pub fn scaled_distance_sqr(xstar: &[C64], xhat: &[C64]) -> f64 {
    let denom = norm_sqr(xhat);
    if denom == 0.0 {
        return norm_sqr(xstar);
    }
    let c = dot(xhat, xstar) / denom;
    xstar
        .iter()
        .zip(xhat)
        .map(|(a, b)| (a - b * c).norm_sqr())
        .sum()
}

/// Normalized scale-invariant MSE with the per-frame `dist²` values.
pub fn ns_mse(xstar: &ComplexMatrix, xhat: &ComplexMatrix) -> Result<(f64, Vec<f64>)> {
    if xstar.shape() != xhat.shape() {
        return Err(Error::DimensionMismatch(format!(
            "truth is {:?}, estimate is {:?}",
            xstar.shape(),
            xhat.shape()
        )));
    }
    let total = xstar.frobenius_norm().powi(2);
    if total == 0.0 {
        return Err(Error::InvalidParameter(
            "ground truth is identically zero".into(),
        ));
    }
    let dists: Vec<f64> = (0..xstar.cols())
        .map(|k| scaled_distance_sqr(xstar.col(k), xhat.col(k)))
        .collect();
    Ok((dists.iter().sum::<f64>() / total, dists))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rank_one_instance() {
        let inst = gen_lowrank_instance(10, 6, 1, 1.0, 3).unwrap();
        assert_eq!(inst.singular_values, vec![1.0]);
        assert!((inst.lowrank.frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_values_are_log_spaced() {
        let inst = gen_lowrank_instance(30, 20, 3, 4.0, 1).unwrap();
        let s = &inst.singular_values;
        assert!(
            (s[0] - 1.0).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15 && (s[2] - 0.25).abs() < 1e-15
        );
    }

    #[test]
    fn distance_by_hand() {
        let e1 = [C64::new(1.0, 0.0), ZERO];
        let e2 = [ZERO, C64::new(1.0, 0.0)];
        assert!((scaled_distance_sqr(&e1, &e2) - 1.0).abs() < 1e-15);
        assert_eq!(scaled_distance_sqr(&e1, &[ZERO, ZERO]), 1.0);
    }

    #[test]
    fn residual_mode_parsing() {
        assert_eq!(
            "temporal-sparse".parse::<ResidualMode>().unwrap(),
            ResidualMode::TemporalSparse
        );
        assert!("sparse".parse::<ResidualMode>().is_err());
    }
}
