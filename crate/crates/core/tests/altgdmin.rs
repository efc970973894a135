use lrccs::altgdmin::{
    compute_init_matrix, estimate_rank, run_altgdmin, run_altgdmin_monitored, AltGdminConfig,
    WarmStart,
};
use lrccs::evalkit::gen_lowrank_instance;
use lrccs::linalg::{subspace_distance, ComplexMatrix};
use lrccs::operators::gaussian_stack;
use lrccs::parallel::ReductionMode;
use nalgebra::{Complex, DMatrix};

fn rel_err(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.sub(b).frobenius_norm() / b.frobenius_norm()
}

#[test]
fn warm_start_at_the_true_basis_is_exact() {
    let inst = gen_lowrank_instance(50, 30, 3, 2.0, 1).unwrap();
    let ops = gaussian_stack(50, 12, 30, 2).unwrap();
    let y = inst.measure(&ops).unwrap();
    let warm = WarmStart {
        basis: inst.basis.clone(),
        max_iters: 5,
    };
    let out = run_altgdmin(&y, &ops, &AltGdminConfig::default(), Some(&warm)).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations(), 1);
    assert!(rel_err(&out.xhat, &inst.lowrank) < 1e-10);
}

#[test]
fn recovery_tightens_with_the_exit_tolerance() {
    let inst = gen_lowrank_instance(80, 60, 2, 1.5, 3).unwrap();
    let ops = gaussian_stack(80, 40, 60, 4).unwrap();
    let y = inst.measure(&ops).unwrap();
    let loose = AltGdminConfig {
        rank_override: Some(2),
        ..AltGdminConfig::default()
    };
    let tight = AltGdminConfig {
        exit_tol: 1e-6,
        max_iters: 400,
        ..loose.clone()
    };
    let a = run_altgdmin(&y, &ops, &loose, None).unwrap();
    let b = run_altgdmin(&y, &ops, &tight, None).unwrap();
    let (ea, eb) = (
        rel_err(&a.xhat, &inst.lowrank),
        rel_err(&b.xhat, &inst.lowrank),
    );
    assert!(eb < 1e-4 && eb < ea, "loose {ea:e}, tight {eb:e}");
    assert!(subspace_distance(&b.factors.u, &inst.basis).unwrap() < 1e-4);
    assert!(b.iterations() > a.iterations());
}

#[test]
fn rank_estimate_matches_oracle_spectrum() {
    let inst = gen_lowrank_instance(100, 100, 3, 1.2, 5).unwrap();
    let ops = gaussian_stack(100, 60, 100, 6).unwrap();
    let y = inst.measure(&ops).unwrap();
    let x0 = compute_init_matrix(&y, &ops, 36.0).unwrap();
    let na = DMatrix::from_fn(100, 100, |i, j| Complex::new(x0[(i, j)].re, x0[(i, j)].im));
    let mut s: Vec<f64> = na.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Window of ⌊min(n, q, m)/10⌋ = 6 values, then the first prefix with 85% of its energy.
    let energy: Vec<f64> = s[..6].iter().map(|v| v * v).collect();
    let total: f64 = energy.iter().sum();
    let expected = (1..=6)
        .find(|&r| energy[..r].iter().sum::<f64>() >= 0.85 * total)
        .unwrap();
    assert_eq!(estimate_rank(&x0, y.max_len(), 85.0, 0).unwrap(), expected);
    let out = run_altgdmin(&y, &ops, &AltGdminConfig::default(), None).unwrap();
    assert_eq!(out.rank, expected);
    assert!(expected >= 3);
}

#[test]
fn monitor_sees_every_iteration_and_residuals_fall() {
    let inst = gen_lowrank_instance(60, 40, 2, 2.0, 7).unwrap();
    let ops = gaussian_stack(60, 30, 40, 8).unwrap();
    let y = inst.measure(&ops).unwrap();
    let cfg = AltGdminConfig {
        rank_override: Some(2),
        ..AltGdminConfig::default()
    };
    let mut seen = Vec::new();
    let out = run_altgdmin_monitored(&y, &ops, &cfg, None, |s| {
        seen.push(rel_err(&s.basis.matmul(s.coeffs), &inst.lowrank));
    })
    .unwrap();
    assert_eq!(seen.len(), out.iterations());
    assert!(seen.last().unwrap() < &seen[0]);
    let res: Vec<f64> = out.trace.iter().map(|r| r.residual).collect();
    assert!(res.last().unwrap() < &res[0]);
    assert!(out.trace.iter().all(|r| r.step_norm > 0.0));
}

#[test]
fn ordered_reduction_is_bit_reproducible() {
    let inst = gen_lowrank_instance(40, 30, 2, 2.0, 9).unwrap();
    let ops = gaussian_stack(40, 20, 30, 10).unwrap();
    let y = inst.measure(&ops).unwrap();
    let cfg = AltGdminConfig::default();
    let a = run_altgdmin(&y, &ops, &cfg, None).unwrap();
    let b = run_altgdmin(&y, &ops, &cfg, None).unwrap();
    assert_eq!(a.xhat, b.xhat);
    let unordered = AltGdminConfig {
        reduction: ReductionMode::Unordered,
        ..cfg
    };
    let c = run_altgdmin(&y, &ops, &unordered, None).unwrap();
    assert!(rel_err(&c.xhat, &a.xhat) < 1e-8);
}

#[test]
fn invalid_inputs_are_rejected() {
    let inst = gen_lowrank_instance(20, 10, 2, 2.0, 0).unwrap();
    let ops = gaussian_stack(20, 10, 10, 0).unwrap();
    let y = inst.measure(&ops).unwrap();
    assert!(run_altgdmin(&y, &ops[..9], &AltGdminConfig::default(), None).is_err());
    let too_big = AltGdminConfig {
        rank_override: Some(11),
        ..AltGdminConfig::default()
    };
    assert!(run_altgdmin(&y, &ops, &too_big, None).is_err());
    let bad_basis = WarmStart {
        basis: ComplexMatrix::zeros(20, 2),
        max_iters: 3,
    };
    assert!(run_altgdmin(&y, &ops, &AltGdminConfig::default(), Some(&bad_basis)).is_err());
}
