use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::{dot, norm, random_vector, ComplexMatrix, C64};

/// A linear operator between complex vector spaces, together with its adjoint.
pub trait LinearMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[C64]) -> Vec<C64>;
    fn adjoint(&self, y: &[C64]) -> Vec<C64>;

    /// A known upper bound on the spectral norm, if one is cheap to state.
    fn norm_bound(&self) -> Option<f64> {
        None
    }
}

/// Shared handle to a per-frame operator.
pub type OpRef = Arc<dyn LinearMap>;

impl<T: LinearMap + ?Sized> LinearMap for Arc<T> {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn forward(&self, x: &[C64]) -> Vec<C64> {
        (**self).forward(x)
    }
    fn adjoint(&self, y: &[C64]) -> Vec<C64> {
        (**self).adjoint(y)
    }
    fn norm_bound(&self) -> Option<f64> {
        (**self).norm_bound()
    }
}

#[derive(Clone, Debug)]
pub struct IdentityMap {
    pub dim: usize,
}

impl LinearMap for IdentityMap {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, x: &[C64]) -> Vec<C64> {
        x.to_vec()
    }
    fn adjoint(&self, y: &[C64]) -> Vec<C64> {
        y.to_vec()
    }
    fn norm_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Explicit complex matrix as an operator.
#[derive(Clone, Debug)]
pub struct DenseMap {
    pub matrix: ComplexMatrix,
}

impl LinearMap for DenseMap {
    fn input_dim(&self) -> usize {
        self.matrix.cols()
    }
    fn output_dim(&self) -> usize {
        self.matrix.rows()
    }
    fn forward(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(x)
    }
    fn adjoint(&self, y: &[C64]) -> Vec<C64> {
        self.matrix.adjoint_mul_vec(y)
    }
}

/// Materializes an operator as a dense `output_dim x input_dim` matrix.
pub fn materialize(op: &dyn LinearMap) -> ComplexMatrix {
    let n = op.input_dim();
    let mut cols = Vec::with_capacity(n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        cols.push(op.forward(&e));
        e[j] = C64::new(0.0, 0.0);
    }
    ComplexMatrix::from_columns(op.output_dim(), &cols).expect("forward output length")
}

/// Worst relative adjoint mismatch `|⟨Ax, y⟩ − ⟨x, Aᴴy⟩| / (‖x‖‖y‖)` over random trials.
pub fn adjoint_mismatch(op: &dyn LinearMap, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = random_vector(op.input_dim(), &mut rng);
        let y = random_vector(op.output_dim(), &mut rng);
        let lhs = dot(&op.forward(&x), &y);
        let rhs = dot(&x, &op.adjoint(&y));
        let scale = norm(&x) * norm(&y);
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).norm() / scale);
        }
    }
    worst
}

/// Spectral norm of `op`: its stated bound if it has one, otherwise a
/// seeded power iteration on `AᴴA`.
pub fn operator_norm(op: &dyn LinearMap, iters: usize, seed: u64) -> f64 {
    if let Some(b) = op.norm_bound() {
        return b;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_vector(op.input_dim(), &mut rng);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|z| *z /= nx);
        x = op.adjoint(&op.forward(&x));
        estimate = norm(&x).sqrt();
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_map_passes_adjoint_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let op = DenseMap {
            matrix: ComplexMatrix::random_complex_normal(7, 4, &mut rng),
        };
        assert!(adjoint_mismatch(&op, 20, 0) < 1e-10);
        assert!(adjoint_mismatch(&IdentityMap { dim: 5 }, 20, 0) < 1e-15);
        assert_eq!(materialize(&op), op.matrix);
    }

    #[test]
    fn power_iteration_finds_largest_singular_value() {
        let mut m = ComplexMatrix::zeros(3, 2);
        m[(0, 0)] = C64::new(0.0, 3.0);
        m[(2, 1)] = C64::new(1.0, 0.0);
        let op = DenseMap { matrix: m };
        assert!((operator_norm(&op, 50, 4) - 3.0).abs() < 1e-10);
        assert_eq!(operator_norm(&IdentityMap { dim: 3 }, 50, 0), 1.0);
    }
}
