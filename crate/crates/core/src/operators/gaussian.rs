use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, C64};

/// Largest image dimension for which a dense Gaussian matrix is built.
pub const MAX_GAUSSIAN_DIM: usize = 4096;

/// Dense `m x n` matrix with i.i.d. standard real Gaussian entries.
///
/// Acts ℂ-linearly: real and imaginary parts go through the same real matrix.
#[derive(Clone, Debug)]
pub struct GaussianMap {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    entries: Vec<f64>,
}

impl GaussianMap {
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn make_gaussian_operator(n: usize, m: usize, seed: u64) -> Result<GaussianMap> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "gaussian operator needs m, n >= 1 (got m = {m}, n = {n})"
        )));
    }
    if n > MAX_GAUSSIAN_DIM {
        return Err(Error::OperatorTooLarge(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..m * n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(GaussianMap {
        rows: m,
        cols: n,
        entries,
    })
}

impl LinearMap for GaussianMap {
    fn input_dim(&self) -> usize {
        self.cols
    }

    fn output_dim(&self) -> usize {
        self.rows
    }

    fn forward(&self, x: &[C64]) -> Vec<C64> {
        debug_assert_eq!(x.len(), self.cols);
        self.entries
            .chunks_exact(self.cols)
            .map(|row| {
                let (mut re, mut im) = (0.0, 0.0);
                for (g, z) in row.iter().zip(x) {
                    re += g * z.re;
                    im += g * z.im;
                }
                C64::new(re, im)
            })
            .collect()
    }

    fn adjoint(&self, y: &[C64]) -> Vec<C64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (row, yi) in self.entries.chunks_exact(self.cols).zip(y) {
            for (o, g) in out.iter_mut().zip(row) {
                o.re += g * yi.re;
                o.im += g * yi.im;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::adjoint_mismatch;

    #[test]
    fn scalar_case_is_multiplication() {
        let op = make_gaussian_operator(1, 1, 42).unwrap();
        let g = op.entry(0, 0);
        let x = [C64::new(2.0, -1.0)];
        assert_eq!(op.forward(&x)[0], x[0] * g);
        assert_eq!(op.adjoint(&x)[0], x[0] * g);
    }

    #[test]
    fn row_norms_follow_law_of_large_numbers() {
        let n = 50;
        let op = make_gaussian_operator(n, 1000, 3).unwrap();
        let mean: f64 = (0..1000)
            .map(|i| op.row(i).iter().map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            / 1000.0;
        assert!(
            (mean - n as f64).abs() < 0.05 * n as f64,
            "mean row norm² {mean}"
        );
    }

    #[test]
    fn adjoint_is_exact_transpose() {
        let op = make_gaussian_operator(30, 12, 9).unwrap();
        assert!(adjoint_mismatch(&op, 20, 1) < 1e-10);
    }

    #[test]
    fn deterministic_and_size_limited() {
        let a = make_gaussian_operator(5, 4, 1).unwrap();
        let b = make_gaussian_operator(5, 4, 1).unwrap();
        assert_eq!(a.entries, b.entries);
        assert!(matches!(
            make_gaussian_operator(MAX_GAUSSIAN_DIM + 1, 2, 0),
            Err(Error::OperatorTooLarge(_))
        ));
        assert!(make_gaussian_operator(0, 2, 0).is_err());
    }
}
