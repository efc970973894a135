//! Masked unitary 2D Fourier operators, single- and multi-coil.
//!
//! Images are `ny x nx` grids stored row-major (`iy * nx + ix`). k-space
//! indices refer to the DC-centered grid: DC sits at `(ny / 2, nx / 2)`.
//! Both directions are scaled by `1/√n`, so the full-mask operator is unitary.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, OpRef, C64};
use crate::sampling::{Grid, SamplingMask};

/// FFT plans for one grid, shared by every frame operator on that grid.
pub struct FourierPlan {
    grid: Grid,
    row_forward: Arc<dyn Fft<f64>>,
    row_inverse: Arc<dyn Fft<f64>>,
    col_forward: Arc<dyn Fft<f64>>,
    col_inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FourierPlan({}x{})", self.grid.ny, self.grid.nx)
    }
}

impl FourierPlan {
    pub fn new(grid: Grid) -> Arc<Self> {
        let mut planner = FftPlanner::new();
        Arc::new(FourierPlan {
            grid,
            row_forward: planner.plan_fft_forward(grid.nx),
            row_inverse: planner.plan_fft_inverse(grid.nx),
            col_forward: planner.plan_fft_forward(grid.ny),
            col_inverse: planner.plan_fft_inverse(grid.ny),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Unnormalized 2D DFT in place, in FFT bin order.
    fn transform(&self, buf: &mut [C64], inverse: bool) {
        let Grid { ny, nx } = self.grid;
        let (row, col) = if inverse {
            (&self.row_inverse, &self.col_inverse)
        } else {
            (&self.row_forward, &self.col_forward)
        };
        row.process(buf);
        let mut t = vec![C64::new(0.0, 0.0); buf.len()];
        for iy in 0..ny {
            for ix in 0..nx {
                t[ix * ny + iy] = buf[iy * nx + ix];
            }
        }
        col.process(&mut t);
        for ix in 0..nx {
            for iy in 0..ny {
                buf[iy * nx + ix] = t[ix * ny + iy];
            }
        }
    }

    /// Unitary centered 2D DFT of an image, returned on the DC-centered grid.
    pub fn centered_spectrum(&self, image: &[C64]) -> Vec<C64> {
        let n = self.grid.len();
        let mut buf = image.to_vec();
        self.transform(&mut buf, false);
        let scale = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|c| buf[self.centered_to_bin(c)] * scale)
            .collect()
    }

    /// Maps a DC-centered linear k-space index to the FFT-order index.
    pub fn centered_to_bin(&self, centered: usize) -> usize {
        let Grid { ny, nx } = self.grid;
        let (cy, cx) = (centered / nx, centered % nx);
        let ky = (cy + ny - ny / 2) % ny;
        let kx = (cx + nx - nx / 2) % nx;
        ky * nx + kx
    }
}

/// Masked Fourier operator, optionally preceded by coil sensitivity weighting.
#[derive(Clone, Debug)]
pub struct FourierMap {
    plan: Arc<FourierPlan>,
    bins: Vec<usize>,
    coils: Option<Arc<Vec<Vec<C64>>>>,
    scale: f64,
}

impl FourierMap {
    pub fn coil_count(&self) -> usize {
        self.coils.as_ref().map_or(1, |c| c.len())
    }

    pub fn samples_per_coil(&self) -> usize {
        self.bins.len()
    }
}

fn check_frame(frame: &[usize], grid: Grid) -> Result<()> {
    if frame.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = grid.len();
    let mut seen = vec![false; n];
    for &i in frame {
        if i >= n {
            return Err(Error::DimensionMismatch(format!(
                "mask index {i} outside a grid of {n} points"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidParameter(format!("duplicate mask index {i}")));
        }
    }
    Ok(())
}

fn check_coils(coils: &[Vec<C64>], grid: Grid) -> Result<()> {
    if coils.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one coil is required".into(),
        ));
    }
    for (j, c) in coils.iter().enumerate() {
        if c.len() != grid.len() {
            return Err(Error::CoilLengthMismatch {
                coil: j,
                len: c.len(),
                expected: grid.len(),
            });
        }
    }
    Ok(())
}

fn build(
    plan: Arc<FourierPlan>,
    frame: &[usize],
    coils: Option<Arc<Vec<Vec<C64>>>>,
) -> Result<FourierMap> {
    let grid = plan.grid();
    check_frame(frame, grid)?;
    let bins = frame.iter().map(|&c| plan.centered_to_bin(c)).collect();
    Ok(FourierMap {
        plan,
        bins,
        coils,
        scale: 1.0 / (grid.len() as f64).sqrt(),
    })
}

pub fn make_singlecoil_operator(frame: &[usize], grid: Grid) -> Result<FourierMap> {
    build(FourierPlan::new(grid), frame, None)
}

pub fn make_multicoil_operator(
    frame: &[usize],
    coils: &[Vec<C64>],
    grid: Grid,
) -> Result<FourierMap> {
    check_coils(coils, grid)?;
    build(
        FourierPlan::new(grid),
        frame,
        Some(Arc::new(coils.to_vec())),
    )
}

/// One operator per mask frame, all sharing a single FFT plan and coil set.
pub fn fourier_stack(mask: &SamplingMask, coils: Option<&[Vec<C64>]>) -> Result<Vec<OpRef>> {
    let plan = FourierPlan::new(mask.grid());
    let coils = match coils {
        Some(c) => {
            check_coils(c, mask.grid())?;
            Some(Arc::new(c.to_vec()))
        }
        None => None,
    };
    mask.frames()
        .iter()
        .map(|frame| build(plan.clone(), frame, coils.clone()).map(|op| Arc::new(op) as OpRef))
        .collect()
}

impl LinearMap for FourierMap {
    fn input_dim(&self) -> usize {
        self.plan.grid().len()
    }

    fn output_dim(&self) -> usize {
        self.bins.len() * self.coil_count()
    }

    /// A mask is a coordinate projection, so only the pointwise coil energy can amplify.
    fn norm_bound(&self) -> Option<f64> {
        Some(match &self.coils {
            None => 1.0,
            Some(coils) => (0..self.input_dim())
                .map(|i| coils.iter().map(|c| c[i].norm_sqr()).sum::<f64>())
                .fold(0.0, f64::max)
                .sqrt(),
        })
    }

    fn forward(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut out = Vec::with_capacity(self.output_dim());
        let mut sample = |buf: &mut Vec<C64>| {
            self.plan.transform(buf, false);
            out.extend(self.bins.iter().map(|&b| buf[b] * self.scale));
        };
        match &self.coils {
            None => sample(&mut x.to_vec()),
            Some(coils) => {
                for d in coils.iter() {
                    let mut buf: Vec<C64> = d.iter().zip(x).map(|(a, b)| a * b).collect();
                    sample(&mut buf);
                }
            }
        }
        out
    }

    fn adjoint(&self, y: &[C64]) -> Vec<C64> {
        debug_assert_eq!(y.len(), self.output_dim());
        let n = self.input_dim();
        let m = self.bins.len();
        let zero_filled = |block: &[C64]| {
            let mut buf = vec![C64::new(0.0, 0.0); n];
            for (&b, &v) in self.bins.iter().zip(block) {
                buf[b] = v;
            }
            self.plan.transform(&mut buf, true);
            buf.iter_mut().for_each(|z| *z *= self.scale);
            buf
        };
        match &self.coils {
            None => zero_filled(y),
            Some(coils) => {
                let mut acc = vec![C64::new(0.0, 0.0); n];
                for (j, d) in coils.iter().enumerate() {
                    let img = zero_filled(&y[j * m..(j + 1) * m]);
                    for ((a, di), v) in acc.iter_mut().zip(d).zip(&img) {
                        *a += di.conj() * v;
                    }
                }
                acc
            }
        }
    }
}
