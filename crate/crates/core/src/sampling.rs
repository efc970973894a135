//! Per-frame k-space undersampling masks.
//!
//! Mask indices are linear indices `ky * nx + kx` into the DC-centered
//! Fourier grid, with DC at `(ny / 2, nx / 2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::derive_seed;

/// Golden-angle increment between consecutive spokes, in degrees.
pub const GOLDEN_ANGLE_DEG: f64 = 111.25;

const FORCED_CENTRAL_LINES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub ny: usize,
    pub nx: usize,
}

impl Grid {
    pub fn new(ny: usize, nx: usize) -> Self {
        Grid { ny, nx }
    }

    pub fn len(&self) -> usize {
        self.ny * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dc_index(&self) -> usize {
        (self.ny / 2) * self.nx + self.nx / 2
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.ny, self.nx)
    }
}

impl std::str::FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("grid must look like 64x64, got {s:?}"));
        let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let ny: usize = a.trim().parse().map_err(|_| bad())?;
        let nx: usize = b.trim().parse().map_err(|_| bad())?;
        if ny == 0 || nx == 0 {
            return Err(bad());
        }
        Ok(Grid { ny, nx })
    }
}

/// Sorted, unique k-space indices for each of `q` frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingMask {
    grid: Grid,
    frames: Vec<Vec<usize>>,
}

impl SamplingMask {
    /// Validates and normalizes (sorts) the per-frame index lists.
    pub fn new(grid: Grid, mut frames: Vec<Vec<usize>>) -> Result<Self> {
        let n = grid.len();
        for (k, f) in frames.iter_mut().enumerate() {
            if f.is_empty() {
                return Err(Error::EmptyMask);
            }
            f.sort_unstable();
            if let Some(w) = f.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "frame {k} repeats index {}",
                    w[0]
                )));
            }
            if *f.last().unwrap() >= n {
                return Err(Error::DimensionMismatch(format!(
                    "frame {k} index {} outside grid {grid}",
                    f.last().unwrap()
                )));
            }
        }
        Ok(SamplingMask { grid, frames })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn q(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, k: usize) -> &[usize] {
        &self.frames[k]
    }

    pub fn frames(&self) -> &[Vec<usize>] {
        &self.frames
    }

    pub fn counts(&self) -> Vec<usize> {
        self.frames.iter().map(Vec::len).collect()
    }

    /// Frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> SamplingMask {
        SamplingMask {
            grid: self.grid,
            frames: self.frames[start..end].to_vec(),
        }
    }
}

/// Pseudo-radial masks: spokes through the k-space center at golden-angle increments.
///
/// Spoke `j` of frame `k` has angle `((k·L + j) · 111.25°) mod 180°`. Each
/// spoke is rasterized by stepping the radius in half-pixel increments
/// across the ellipse inscribed in the grid and marking the nearest point.
pub fn golden_angle_radial_masks(
    grid: Grid,
    q: usize,
    lines_per_frame: usize,
) -> Result<SamplingMask> {
    if lines_per_frame == 0 {
        return Err(Error::InvalidParameter(
            "lines_per_frame must be at least 1".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let frames = (0..q)
        .map(|k| {
            let mut marked = vec![false; grid.len()];
            marked[grid.dc_index()] = true;
            for j in 0..lines_per_frame {
                let spoke = (k * lines_per_frame + j) as f64;
                let theta = ((spoke * GOLDEN_ANGLE_DEG) % 180.0).to_radians();
                rasterize_spoke(grid, theta, &mut marked);
            }
            marked
                .iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect()
        })
        .collect();
    SamplingMask::new(grid, frames)
}

fn rasterize_spoke(grid: Grid, theta: f64, marked: &mut [bool]) {
    let (cy, cx) = ((grid.ny / 2) as f64, (grid.nx / 2) as f64);
    let (s, c) = theta.sin_cos();
    let (ry, rx) = (grid.ny as f64 / 2.0, grid.nx as f64 / 2.0);
    let r_max = 1.0 / ((c / rx).powi(2) + (s / ry).powi(2)).sqrt();
    let steps = (2.0 * r_max / 0.5).floor() as i64;
    for i in 0..=steps {
        let t = -r_max + 0.5 * i as f64;
        let x = (cx + t * c).round();
        let y = (cy + t * s).round();
        if x < 0.0 || y < 0.0 || x >= grid.nx as f64 || y >= grid.ny as f64 {
            continue;
        }
        marked[y as usize * grid.nx + x as usize] = true;
    }
}

/// Variable-density 1D Cartesian masks (full readout lines along `kx`).
///
/// Each frame keeps `⌈ny / R⌉` phase-encode lines: the 4 central ones, plus
/// lines drawn without replacement with weight `exp(−(ky − ny/2)² / (2σ²))`,
/// `σ = ny / 6`.
pub fn cartesian_vd_masks(grid: Grid, q: usize, reduction: f64, seed: u64) -> Result<SamplingMask> {
    if !(reduction > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "reduction factor must exceed 1, got {reduction}"
        )));
    }
    let ny = grid.ny;
    let lines = ((ny as f64 / reduction).ceil() as usize).min(ny);
    if lines < FORCED_CENTRAL_LINES || ny < FORCED_CENTRAL_LINES {
        return Err(Error::ReductionTooHigh { reduction, lines });
    }
    let center = ny / 2;
    let forced: Vec<usize> = (center - 2..center + 2).collect();
    let sigma = ny as f64 / 6.0;
    let weight = |ky: usize| {
        let d = ky as f64 - center as f64;
        (-d * d / (2.0 * sigma * sigma)).exp()
    };

    let frames = (0..q)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let mut chosen = forced.clone();
            let mut pool: Vec<(usize, f64)> = (0..ny)
                .filter(|ky| !forced.contains(ky))
                .map(|ky| (ky, weight(ky)))
                .collect();
            while chosen.len() < lines {
                let total: f64 = pool.iter().map(|p| p.1).sum();
                let mut target = rng.random::<f64>() * total;
                let mut pick = pool.len() - 1;
                for (i, p) in pool.iter().enumerate() {
                    if target < p.1 {
                        pick = i;
                        break;
                    }
                    target -= p.1;
                }
                chosen.push(pool.swap_remove(pick).0);
            }
            chosen.sort_unstable();
            chosen
                .iter()
                .flat_map(|&ky| (0..grid.nx).map(move |kx| ky * grid.nx + kx))
                .collect()
        })
        .collect();
    SamplingMask::new(grid, frames)
}

/// Independent Bernoulli(ρ) selection of every grid point, per frame.
pub fn bernoulli_masks(grid: Grid, q: usize, rho: f64, seed: u64) -> Result<SamplingMask> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must lie in (0, 1], got {rho}"
        )));
    }
    let frames = (0..q)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            loop {
                let frame: Vec<usize> = (0..grid.len())
                    .filter(|_| rng.random::<f64>() < rho)
                    .collect();
                if !frame.is_empty() {
                    break frame;
                }
            }
        })
        .collect();
    SamplingMask::new(grid, frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!("64x32".parse::<Grid>().unwrap(), Grid::new(64, 32));
        assert!("64".parse::<Grid>().is_err());
        assert!("0x4".parse::<Grid>().is_err());
        assert_eq!(Grid::new(5, 5).dc_index(), 12);
    }

    #[test]
    fn radial_density_matches_rule_of_thumb() {
        let grid = Grid::new(128, 128);
        let mask = golden_angle_radial_masks(grid, 8, 16).unwrap();
        let expected = 16.0 / 128.0 * grid.len() as f64;
        for c in mask.counts() {
            let rel = (c as f64 - expected).abs() / expected;
            assert!(rel <= 0.15, "m_k = {c}, expected ≈ {expected}");
        }
    }

    #[test]
    fn single_axis_spoke_is_center_row() {
        let grid = Grid::new(9, 9);
        let mask = golden_angle_radial_masks(grid, 1, 1).unwrap();
        let row: Vec<usize> = (0..9).map(|kx| 4 * 9 + kx).collect();
        assert_eq!(mask.frame(0), row.as_slice());
    }

    #[test]
    fn consecutive_radial_frames_share_dc_but_differ() {
        let grid = Grid::new(64, 64);
        let mask = golden_angle_radial_masks(grid, 6, 4).unwrap();
        for k in 0..5 {
            assert!(mask.frame(k).contains(&grid.dc_index()));
            assert!(mask.frame(k + 1).contains(&grid.dc_index()));
            assert_ne!(mask.frame(k), mask.frame(k + 1));
        }
    }

    #[test]
    fn radial_counts_are_balanced() {
        let mask = golden_angle_radial_masks(Grid::new(128, 128), 40, 4).unwrap();
        let c = mask.counts();
        let (lo, hi) = (*c.iter().min().unwrap(), *c.iter().max().unwrap());
        assert!(hi as f64 / lo as f64 <= 1.25, "{hi}/{lo}");
    }

    #[test]
    fn cartesian_examples() {
        let grid = Grid::new(128, 32);
        let full = cartesian_vd_masks(grid, 2, 1.0001, 1).unwrap();
        assert!(full.counts().iter().all(|&c| c == grid.len()));

        let center = cartesian_vd_masks(grid, 3, 32.0, 1).unwrap();
        let want: Vec<usize> = (62..66)
            .flat_map(|ky| (0..32).map(move |kx| ky * 32 + kx))
            .collect();
        for f in center.frames() {
            assert_eq!(f, &want);
        }

        let r8 = cartesian_vd_masks(grid, 10, 8.0, 5).unwrap();
        for f in r8.frames() {
            assert_eq!(f.len(), 16 * 32);
            for ky in 62..66 {
                assert!(f.contains(&(ky * 32)));
            }
        }
        assert_ne!(r8.frame(0), r8.frame(1));

        assert!(matches!(
            cartesian_vd_masks(grid, 1, 64.0, 0),
            Err(Error::ReductionTooHigh { .. })
        ));
        assert!(cartesian_vd_masks(grid, 1, 1.0, 0).is_err());
    }

    #[test]
    fn bernoulli_examples() {
        let grid = Grid::new(128, 128);
        let full = bernoulli_masks(Grid::new(8, 8), 3, 1.0, 0).unwrap();
        assert!(full.counts().iter().all(|&c| c == 64));

        let mask = bernoulli_masks(grid, 100, 0.1, 7).unwrap();
        let mean = mask.counts().iter().sum::<usize>() as f64 / 100.0;
        assert!((mean - 1638.4).abs() < 0.05 * 1638.4);

        let other = bernoulli_masks(grid, 1, 0.1, 8).unwrap();
        assert_ne!(mask.frame(0), other.frame(0));
        assert!(bernoulli_masks(grid, 1, 0.0, 0).is_err());
    }

    #[test]
    fn generators_are_deterministic_and_valid() {
        let grid = Grid::new(32, 24);
        let a = bernoulli_masks(grid, 4, 0.05, 3).unwrap();
        assert_eq!(a, bernoulli_masks(grid, 4, 0.05, 3).unwrap());
        let b = cartesian_vd_masks(grid, 4, 4.0, 3).unwrap();
        assert_eq!(b, cartesian_vd_masks(grid, 4, 4.0, 3).unwrap());
        let c = golden_angle_radial_masks(grid, 4, 3).unwrap();
        for m in [&a, &b, &c] {
            assert!(SamplingMask::new(grid, m.frames().to_vec()).is_ok());
        }
        // Tiny rho still never yields empty frames.
        let sparse = bernoulli_masks(Grid::new(4, 4), 20, 0.01, 1).unwrap();
        assert!(sparse.counts().iter().all(|&c| c >= 1));
    }
}
