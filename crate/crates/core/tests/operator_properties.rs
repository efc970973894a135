use lrccs::altgdmin::{compute_gradient, objective};
use lrccs::linalg::{adjoint_mismatch, qr_orthonormalize, ComplexMatrix, LinearMap, OpRef, C64};
use lrccs::operators::fourier::{fourier_stack, make_multicoil_operator, make_singlecoil_operator};
use lrccs::operators::gaussian::make_gaussian_operator;
use lrccs::operators::{apply_forward_stack, gaussian_stack};
use lrccs::parallel::ReductionMode;
use lrccs::sampling::{bernoulli_masks, Grid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(grid: Grid, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut bins: Vec<usize> = (0..count)
        .map(|_| rng.random_range(0..grid.len()))
        .collect();
    bins.sort_unstable();
    bins.dedup();
    bins
}

fn random_coils(grid: Grid, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    (0..count)
        .map(|_| ComplexMatrix::random_complex_normal(grid.len(), 1, rng).into_vec())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fourier_adjoint_identity(ny in 2usize..12, nx in 2usize..12, count in 1usize..40, seed in any::<u64>()) {
        let grid = Grid::new(ny, nx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_frame(grid, count, &mut rng);
        let single = make_singlecoil_operator(&frame, grid).unwrap();
        prop_assert!(adjoint_mismatch(&single, 5, seed) < 1e-10);
        let coils = random_coils(grid, 3, &mut rng);
        let multi = make_multicoil_operator(&frame, &coils, grid).unwrap();
        prop_assert!(adjoint_mismatch(&multi, 5, seed) < 1e-10);
    }

    #[test]
    fn gaussian_adjoint_identity(n in 1usize..40, m in 1usize..40, seed in any::<u64>()) {
        let op = make_gaussian_operator(n, m, seed).unwrap();
        prop_assert!(adjoint_mismatch(&op, 5, seed) < 1e-10);
    }

    #[test]
    fn full_mask_is_an_isometry(ny in 2usize..16, nx in 2usize..16, seed in any::<u64>()) {
        let grid = Grid::new(ny, nx);
        let all: Vec<usize> = (0..grid.len()).collect();
        let op = make_singlecoil_operator(&all, grid).unwrap();
        let x = ComplexMatrix::random_complex_normal(grid.len(), 1, &mut ChaCha8Rng::seed_from_u64(seed)).into_vec();
        let y = op.forward(&x);
        let nx_ = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ny_ = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((nx_ - ny_).abs() <= 1e-10 * nx_);
        let back = op.adjoint(&y);
        let err = back.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-10 * nx_);
    }

    #[test]
    fn unit_coil_reduces_exactly(ny in 2usize..10, nx in 2usize..10, count in 1usize..30, seed in any::<u64>()) {
        let grid = Grid::new(ny, nx);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_frame(grid, count, &mut rng);
        let single = make_singlecoil_operator(&frame, grid).unwrap();
        let multi = make_multicoil_operator(&frame, &[vec![C64::new(1.0, 0.0); grid.len()]], grid).unwrap();
        let x = ComplexMatrix::random_complex_normal(grid.len(), 1, &mut rng).into_vec();
        prop_assert_eq!(single.forward(&x), multi.forward(&x));
        let y = ComplexMatrix::random_complex_normal(frame.len(), 1, &mut rng).into_vec();
        prop_assert_eq!(single.adjoint(&y), multi.adjoint(&y));
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let (n, q, r, m) = (12, 6, 2, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = gaussian_stack(n, m, q, seed).unwrap();
        let truth = ComplexMatrix::random_complex_normal(n, q, &mut rng);
        let y = apply_forward_stack(&ops, &truth).unwrap();
        let (u, _) = qr_orthonormalize(&ComplexMatrix::random_complex_normal(n, r, &mut rng)).unwrap();
        let b = ComplexMatrix::random_complex_normal(r, q, &mut rng);
        let d = ComplexMatrix::random_complex_normal(n, r, &mut rng);
        let grad = compute_gradient(&u, &b, &y, &ops, ReductionMode::Ordered).unwrap();
        let h = 1e-6;
        let f = |s: f64| objective(&u.add(&d.scaled(C64::new(s, 0.0))), &b, &y, &ops).unwrap();
        let numeric = (f(h) - f(-h)) / (2.0 * h);
        // f is real, so its directional derivative is 2 Re⟨∇, D⟩.
        let analytic = 2.0 * grad.as_slice().iter().zip(d.as_slice()).map(|(g, e)| (g.conj() * e).re).sum::<f64>();
        prop_assert!((numeric - analytic).abs() <= 1e-4 * analytic.abs().max(1e-8));
    }
}

#[test]
fn stacked_fourier_operators_share_shape() {
    let grid = Grid::new(8, 8);
    let mask = bernoulli_masks(grid, 5, 0.3, 2).unwrap();
    let ops: Vec<OpRef> = fourier_stack(&mask, None).unwrap();
    for (k, op) in ops.iter().enumerate() {
        assert_eq!(op.input_dim(), 64);
        assert_eq!(op.output_dim(), mask.frame(k).len());
    }
    let x = ComplexMatrix::zeros(64, 5);
    let y = apply_forward_stack(&ops, &x).unwrap();
    assert_eq!(y.lengths(), mask.counts());
}
