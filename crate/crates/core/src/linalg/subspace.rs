use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-8;

/// `‖(I − U1 U1ᴴ) U2‖_F` for orthonormal `n x r` bases; lies in `[0, √r]`.
pub fn subspace_distance(u1: &ComplexMatrix, u2: &ComplexMatrix) -> Result<f64> {
    if u1.rows() != u2.rows() {
        return Err(Error::DimensionMismatch(format!(
            "subspace_distance of {}-row and {}-row bases",
            u1.rows(),
            u2.rows()
        )));
    }
    for u in [u1, u2] {
        let defect = u.orthonormality_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(defect));
        }
    }
    let coeffs = u1.adjoint_matmul(u2);
    let residual = u2.sub(&u1.matmul(&coeffs));
    Ok(residual.frobenius_norm())
}

/// Magnitude shrinkage with phase preserved: `w · max(|w| − ω, 0) / |w|`.
pub fn soft_threshold_scalar(w: C64, omega: f64) -> C64 {
    let mag = w.norm();
    if mag <= omega || mag == 0.0 {
        ZERO
    } else {
        w * ((mag - omega) / mag)
    }
}

pub fn soft_threshold(w: &ComplexMatrix, omega: f64) -> ComplexMatrix {
    assert!(omega >= 0.0, "soft threshold level must be nonnegative");
    let mut out = w.clone();
    soft_threshold_in_place(out.as_mut_slice(), omega);
    out
}

pub fn soft_threshold_in_place(values: &mut [C64], omega: f64) {
    if omega == 0.0 {
        return;
    }
    values
        .iter_mut()
        .for_each(|z| *z = soft_threshold_scalar(*z, omega));
}
