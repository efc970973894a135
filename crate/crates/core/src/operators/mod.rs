//! Measurement operators and the stacked whole-matrix model `Y = 𝒜(X)`.

pub mod fourier;
pub mod gaussian;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::matrix::ZERO;
use crate::linalg::{ComplexMatrix, LinearMap, OpRef, C64};
use crate::parallel::{map_frames, try_map_frames};

pub use fourier::{
    fourier_stack, make_multicoil_operator, make_singlecoil_operator, FourierMap, FourierPlan,
};
pub use gaussian::{make_gaussian_operator, GaussianMap, MAX_GAUSSIAN_DIM};

/// Per-frame measurement vectors `y_k` (lengths may differ between frames).
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    frames: Vec<Vec<C64>>,
}

impl MeasurementSet {
    pub fn new(frames: Vec<Vec<C64>>) -> Result<Self> {
        if let Some(k) = frames.iter().position(|f| f.is_empty()) {
            return Err(Error::DimensionMismatch(format!(
                "frame {k} has no measurements"
            )));
        }
        Ok(MeasurementSet { frames })
    }

    pub fn q(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, k: usize) -> &[C64] {
        &self.frames[k]
    }

    pub fn frames(&self) -> &[Vec<C64>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Vec<C64>> {
        self.frames
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.frames.iter().map(Vec::len).collect()
    }

    /// `m = max_k m_k`.
    pub fn max_len(&self) -> usize {
        self.frames.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `m̄ = Σ m_k / q`.
    pub fn mean_len(&self) -> f64 {
        self.frames.iter().map(Vec::len).sum::<usize>() as f64 / self.q().max(1) as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frames
            .iter()
            .flat_map(|f| f.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Frames `start..end` as their own set.
    pub fn slice(&self, start: usize, end: usize) -> MeasurementSet {
        MeasurementSet {
            frames: self.frames[start..end].to_vec(),
        }
    }

    /// Zero-padded `max_len x q` matrix; frame `k` occupies the top of column `k`.
    pub fn to_padded_matrix(&self) -> ComplexMatrix {
        let m = self.max_len();
        let mut out = ComplexMatrix::zeros(m, self.q());
        for (k, f) in self.frames.iter().enumerate() {
            out.col_mut(k)[..f.len()].copy_from_slice(f);
        }
        out
    }

    /// Inverse of [`to_padded_matrix`](Self::to_padded_matrix) given the true frame lengths.
    pub fn from_padded_matrix(matrix: &ComplexMatrix, lengths: &[usize]) -> Result<Self> {
        if lengths.len() != matrix.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} frame lengths for {} columns",
                lengths.len(),
                matrix.cols()
            )));
        }
        let frames = lengths
            .iter()
            .enumerate()
            .map(|(k, &len)| {
                if len > matrix.rows() {
                    Err(Error::DimensionMismatch(format!(
                        "frame {k} needs {len} rows, container has {}",
                        matrix.rows()
                    )))
                } else {
                    Ok(matrix.col(k)[..len].to_vec())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        MeasurementSet::new(frames)
    }
}

fn check_stack(ops: &[OpRef], q: usize) -> Result<()> {
    if ops.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "{} operators for {q} frames",
            ops.len()
        )));
    }
    Ok(())
}

/// `y_k = A_k x_k` for every column of `x`.
pub fn apply_forward_stack(ops: &[OpRef], x: &ComplexMatrix) -> Result<MeasurementSet> {
    check_stack(ops, x.cols())?;
    let frames = try_map_frames(x.cols(), |k| {
        if ops[k].input_dim() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "operator {k} expects length {}, column has {}",
                ops[k].input_dim(),
                x.rows()
            )));
        }
        Ok(ops[k].forward(x.col(k)))
    })?;
    MeasurementSet::new(frames)
}

/// The `n x q` matrix with columns `A_kᴴ y_k`.
pub fn apply_adjoint_stack(ops: &[OpRef], y: &MeasurementSet) -> Result<ComplexMatrix> {
    check_stack(ops, y.q())?;
    let n = common_input_dim(ops)?;
    let cols = try_map_frames(y.q(), |k| {
        if ops[k].output_dim() != y.frame(k).len() {
            return Err(Error::DimensionMismatch(format!(
                "operator {k} produces {} values, frame has {}",
                ops[k].output_dim(),
                y.frame(k).len()
            )));
        }
        Ok(ops[k].adjoint(y.frame(k)))
    })?;
    ComplexMatrix::from_columns(n, &cols)
}

/// Shared image length of a nonempty operator stack.
pub fn common_input_dim(ops: &[OpRef]) -> Result<usize> {
    let n = ops
        .first()
        .ok_or_else(|| Error::DimensionMismatch("empty operator stack".into()))?
        .input_dim();
    if let Some(k) = ops.iter().position(|op| op.input_dim() != n) {
        return Err(Error::DimensionMismatch(format!(
            "operator {k} has input length {}, expected {n}",
            ops[k].input_dim()
        )));
    }
    Ok(n)
}

/// Checks that `y` and `ops` describe the same frames and returns the image length.
pub fn check_problem(y: &MeasurementSet, ops: &[OpRef]) -> Result<usize> {
    check_stack(ops, y.q())?;
    let n = common_input_dim(ops)?;
    for (k, op) in ops.iter().enumerate() {
        if op.output_dim() != y.frame(k).len() {
            return Err(Error::DimensionMismatch(format!(
                "operator {k} produces {} values, frame has {}",
                op.output_dim(),
                y.frame(k).len()
            )));
        }
    }
    Ok(n)
}

/// `z ↦ [A_1 z; …; A_q z]`, the operator of the common-mean least-squares problem.
#[derive(Clone)]
pub struct MeanMap {
    ops: Vec<OpRef>,
    offsets: Vec<usize>,
    n: usize,
}

impl MeanMap {
    pub fn stack(&self, y: &MeasurementSet) -> Vec<C64> {
        y.frames().concat()
    }
}

pub fn make_mean_operator(ops: &[OpRef]) -> Result<MeanMap> {
    let n = common_input_dim(ops)?;
    let mut offsets = Vec::with_capacity(ops.len() + 1);
    offsets.push(0);
    for op in ops {
        offsets.push(offsets.last().unwrap() + op.output_dim());
    }
    Ok(MeanMap {
        ops: ops.to_vec(),
        offsets,
        n,
    })
}

impl LinearMap for MeanMap {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn forward(&self, z: &[C64]) -> Vec<C64> {
        map_frames(self.ops.len(), |k| self.ops[k].forward(z)).concat()
    }

    fn adjoint(&self, y: &[C64]) -> Vec<C64> {
        let parts = map_frames(self.ops.len(), |k| {
            self.ops[k].adjoint(&y[self.offsets[k]..self.offsets[k + 1]])
        });
        let mut acc = vec![ZERO; self.n];
        for p in parts {
            for (a, v) in acc.iter_mut().zip(&p) {
                *a += v;
            }
        }
        acc
    }
}

/// Seed for item `index` of a seeded family (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `q` independent `m x n` Gaussian operators derived from one seed.
pub fn gaussian_stack(n: usize, m: usize, q: usize, seed: u64) -> Result<Vec<OpRef>> {
    (0..q)
        .map(|k| {
            make_gaussian_operator(n, m, derive_seed(seed, k as u64))
                .map(|op| Arc::new(op) as OpRef)
        })
        .collect()
}

/// `q` identity operators on length-`n` images.
pub fn identity_stack(n: usize, q: usize) -> Vec<OpRef> {
    let op: OpRef = Arc::new(crate::linalg::IdentityMap { dim: n });
    vec![op; q]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix::{dot, norm, random_vector};
    use crate::linalg::{adjoint_mismatch, cgls_solve, DenseMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_in_zero_out() {
        let ops = gaussian_stack(6, 4, 3, 1).unwrap();
        let y = apply_forward_stack(&ops, &ComplexMatrix::zeros(6, 3)).unwrap();
        assert!(y.frames().iter().flatten().all(|z| *z == ZERO));
        let x = apply_adjoint_stack(&ops, &y).unwrap();
        assert_eq!(x.frobenius_norm(), 0.0);
    }

    #[test]
    fn single_frame_reduces_to_one_call() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ops = gaussian_stack(5, 3, 1, 2).unwrap();
        let x = ComplexMatrix::random_complex_normal(5, 1, &mut rng);
        let y = apply_forward_stack(&ops, &x).unwrap();
        assert_eq!(y.frame(0), ops[0].forward(x.col(0)).as_slice());
        let back = apply_adjoint_stack(&ops, &y).unwrap();
        assert_eq!(back.col(0), ops[0].adjoint(y.frame(0)).as_slice());
    }

    #[test]
    fn stacked_adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops = gaussian_stack(20, 7, 6, 3).unwrap();
        let x = ComplexMatrix::random_complex_normal(20, 6, &mut rng);
        let y = MeasurementSet::new((0..6).map(|_| random_vector(7, &mut rng)).collect()).unwrap();
        let ax = apply_forward_stack(&ops, &x).unwrap();
        let aty = apply_adjoint_stack(&ops, &y).unwrap();
        let lhs: C64 = (0..6).map(|k| dot(ax.frame(k), y.frame(k))).sum();
        let rhs = dot(x.as_slice(), aty.as_slice());
        let scale = x.frobenius_norm() * y.frobenius_norm();
        assert!((lhs - rhs).norm() < 1e-10 * scale);
    }

    #[test]
    fn mean_operator_properties() {
        let ops = gaussian_stack(9, 4, 5, 4).unwrap();
        let mean = make_mean_operator(&ops).unwrap();
        assert!(adjoint_mismatch(&mean, 20, 0) < 1e-10);
        let single = make_mean_operator(&ops[..1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = random_vector(9, &mut rng);
        assert_eq!(single.forward(&z), ops[0].forward(&z));
    }

    #[test]
    fn mean_of_identical_invertible_operators_is_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut a = ComplexMatrix::random_complex_normal(4, 4, &mut rng);
        for i in 0..4 {
            a[(i, i)] += C64::new(4.0, 0.0);
        }
        let op: OpRef = Arc::new(DenseMap { matrix: a.clone() });
        let ops = vec![op; 5];
        let zs: Vec<Vec<C64>> = (0..5).map(|_| random_vector(4, &mut rng)).collect();
        let y = MeasurementSet::new(zs.iter().map(|z| a.mul_vec(z)).collect()).unwrap();
        let mean_op = make_mean_operator(&ops).unwrap();
        let res = cgls_solve(&mean_op, &mean_op.stack(&y), &[ZERO; 4], 50, 1e-14);
        for i in 0..4 {
            let want: C64 = zs.iter().map(|z| z[i]).sum::<C64>() / 5.0;
            assert!((res.x[i] - want).norm() < 1e-8);
        }
    }

    #[test]
    fn padded_round_trip_and_mismatch() {
        let y = MeasurementSet::new(vec![
            vec![C64::new(1.0, 0.0); 3],
            vec![C64::new(2.0, 1.0); 5],
        ])
        .unwrap();
        let p = y.to_padded_matrix();
        assert_eq!(p.shape(), (5, 2));
        assert_eq!(
            MeasurementSet::from_padded_matrix(&p, &y.lengths()).unwrap(),
            y
        );
        assert!(MeasurementSet::new(vec![vec![]]).is_err());
        let ops = gaussian_stack(4, 3, 2, 0).unwrap();
        assert!(apply_forward_stack(&ops, &ComplexMatrix::zeros(4, 3)).is_err());
        assert!(norm(y.frame(0)) > 0.0);
    }
}
