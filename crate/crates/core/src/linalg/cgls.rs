//! Conjugate gradient on the least-squares normal equations (CGLS).

use super::linear_map::LinearMap;
use super::matrix::{axpy, norm, norm_sqr, sub_vec, C64};

/// Outcome of a CGLS run.
#[derive(Clone, Debug)]
pub struct CglsResult {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// `‖Aᴴ(y − Ax)‖ / ‖Aᴴy‖` at exit (0 when `Aᴴy = 0`).
    pub relative_normal_residual: f64,
}

/// Smallest relative normal residual the stopping test honours.
pub const NORMAL_RESIDUAL_FLOOR: f64 = 1e-15;

/// Runs at most `max_iters` CGLS steps for `min ‖y − Ax‖` starting at `x0`.
///
/// Stops early once `‖Aᴴ(y − Ax)‖ ≤ max(tol, 1e-15) · ‖Aᴴy‖`, so a tolerance
/// far below machine precision (e.g. `1e-36`) stops at convergence to
/// working precision rather than iterating on rounding noise.

pub fn cgls_solve(
    op: &dyn LinearMap,
    y: &[C64],
    x0: &[C64],
    max_iters: usize,
    tol: f64,
) -> CglsResult {
    assert_eq!(y.len(), op.output_dim(), "cgls rhs length");
    assert_eq!(x0.len(), op.input_dim(), "cgls start length");

    // Tolerances below the f64 resolution of the normal residual would keep
    // iterating on rounding noise, which slowly undoes a converged solution.
    let tol = tol.max(NORMAL_RESIDUAL_FLOOR);
    let reference = norm(&op.adjoint(y));
    let mut x = x0.to_vec();
    let mut r = sub_vec(y, &op.forward(&x));
    let mut s = op.adjoint(&r);
    let mut gamma = norm_sqr(&s);
    let rel = |g: f64| {
        if reference > 0.0 {
            g.sqrt() / reference
        } else {
            0.0
        }
    };

    if gamma.sqrt() <= tol * reference || gamma == 0.0 {
        return CglsResult {
            x,
            iterations: 0,
            relative_normal_residual: rel(gamma),
        };
    }

    let mut p = s.clone();
    let mut iterations = 0;
    for _ in 0..max_iters {
        let q = op.forward(&p);
        let delta = norm_sqr(&q);
        if delta == 0.0 {
            break;
        }
        let alpha = gamma / delta;
        axpy(C64::new(alpha, 0.0), &p, &mut x);
        axpy(C64::new(-alpha, 0.0), &q, &mut r);
        s = op.adjoint(&r);
        let gamma_next = norm_sqr(&s);
        iterations += 1;
        if gamma_next.sqrt() <= tol * reference || gamma_next == 0.0 {
            gamma = gamma_next;
            break;
        }
        let beta = gamma_next / gamma;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
        gamma = gamma_next;
    }
    CglsResult {
        x,
        iterations,
        relative_normal_residual: rel(gamma),
    }
}
