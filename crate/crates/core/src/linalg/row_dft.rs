//! Unitary DFT along the rows of a matrix (the temporal axis of an `n x q` image sequence).

use rustfft::FftPlanner;

use super::matrix::ComplexMatrix;

fn transform(m: &ComplexMatrix, inverse: bool) -> ComplexMatrix {
    let (n, q) = m.shape();
    if n == 0 || q == 0 {
        return m.clone();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(q)
    } else {
        planner.plan_fft_forward(q)
    };
    // Transposed copy puts every row contiguous, so one batched call covers all rows.
    let mut rows = m.conj_transpose().into_vec();
    rows.iter_mut().for_each(|z| *z = z.conj());
    fft.process(&mut rows);
    let scale = 1.0 / (q as f64).sqrt();
    ComplexMatrix::from_fn(n, q, |i, k| rows[i * q + k] * scale)
}

/// `M F` with `F` the unitary `q`-point DFT: each row is transformed independently.
pub fn row_dft(m: &ComplexMatrix) -> ComplexMatrix {
    transform(m, false)
}

/// Inverse of [`row_dft`].
pub fn row_idft(m: &ComplexMatrix) -> ComplexMatrix {
    transform(m, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix::C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(m: &ComplexMatrix, sign: f64) -> ComplexMatrix {
        let (n, q) = m.shape();
        ComplexMatrix::from_fn(n, q, |i, f| {
            (0..q)
                .map(|k| {
                    let phase = sign * 2.0 * std::f64::consts::PI * (f * k) as f64 / q as f64;
                    m[(i, k)] * C64::from_polar(1.0, phase)
                })
                .sum::<C64>()
                / (q as f64).sqrt()
        })
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ComplexMatrix::random_complex_normal(5, 12, &mut rng);
        assert!(row_dft(&m).sub(&naive(&m, -1.0)).frobenius_norm() < 1e-12);
        assert!(row_idft(&m).sub(&naive(&m, 1.0)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn unitary_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ComplexMatrix::random_complex_normal(7, 9, &mut rng);
        let f = row_dft(&m);
        assert!((f.frobenius_norm() - m.frobenius_norm()).abs() < 1e-12);
        assert!(row_idft(&f).sub(&m).frobenius_norm() < 1e-12);
    }

    #[test]
    fn constant_row_maps_to_dc() {
        let m = ComplexMatrix::from_fn(1, 4, |_, _| C64::new(1.0, 0.0));
        let f = row_dft(&m);
        assert!((f[(0, 0)] - C64::new(2.0, 0.0)).norm() < 1e-15);
        assert!(f.col_range(1, 4).frobenius_norm() < 1e-15);
    }
}
