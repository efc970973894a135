use lrccs::altgdmin::AltGdminConfig;
use lrccs::evalkit::{gen_phantom_sequence, ResidualMode};
use lrccs::linalg::{ComplexMatrix, C64};
use lrccs::operators::fourier::fourier_stack;
use lrccs::pipeline::{
    estimate_mean, evaluate_model, mec_sparse_ista, run_altgdmin_mri, run_altgdmin_mri2,
    run_three_level, PipelineOptions,
};
use lrccs::sampling::{bernoulli_masks, Grid, SamplingMask};

fn full_mask(grid: Grid, q: usize) -> SamplingMask {
    SamplingMask::new(grid, vec![(0..grid.len()).collect(); q]).unwrap()
}

#[test]
fn fully_sampled_sequence_is_reconstructed_exactly() {
    let grid = Grid::new(32, 32);
    let inst = gen_phantom_sequence(grid, 10, 1.0, ResidualMode::Unstructured, 1).unwrap();
    let ops = fourier_stack(&full_mask(grid, 10), None).unwrap();
    let y = inst.measure(&ops).unwrap();
    // With every k-space sample the mean is the frame average and MEC closes the gap.
    let mean = estimate_mean(&y, &ops).unwrap();
    let truth = inst.truth();
    for i in 0..grid.len() {
        let avg: C64 = (0..10).map(|k| truth[(i, k)]).sum::<C64>() / 10.0;
        assert!((mean[i] - avg).norm() < 1e-12);
    }
    let (model, mut report) = run_altgdmin_mri(&y, &ops, &AltGdminConfig::default()).unwrap();
    evaluate_model(&mut report, &model, &truth).unwrap();
    assert!(report.error.unwrap() < 1e-20, "{:?}", report.error);
    assert_eq!(report.frame_dists.len(), 10);
}

#[test]
fn stages_report_their_errors_in_order() {
    let grid = Grid::new(32, 32);
    let inst = gen_phantom_sequence(grid, 16, 1.0, ResidualMode::TemporalSparse, 2).unwrap();
    let ops = fourier_stack(&bernoulli_masks(grid, 16, 0.3, 3).unwrap(), None).unwrap();
    let y = inst.measure(&ops).unwrap();
    let (model, mut report) = run_altgdmin_mri2(&y, &ops, &AltGdminConfig::default()).unwrap();
    evaluate_model(&mut report, &model, &inst.truth()).unwrap();
    let stages: Vec<&str> = report
        .stage_errors
        .iter()
        .map(|s| s.stage.as_str())
        .collect();
    assert_eq!(stages, ["mean", "mean+lowrank", "full"]);
    let e: Vec<f64> = report.stage_errors.iter().map(|s| s.error).collect();
    assert!(e[0] > e[1], "{e:?}");
    assert!(report.mec_iterations.is_some());
    assert!(report.condition.is_some() && report.energy.is_some());
    let text = report.to_text();
    assert!(text.contains("algorithm=mri2\n") && text.contains("error.mean="));
}

#[test]
fn plain_options_skip_mean_and_residual() {
    let grid = Grid::new(32, 32);
    let inst = gen_phantom_sequence(grid, 8, 1.0, ResidualMode::None, 4).unwrap();
    let ops = fourier_stack(&bernoulli_masks(grid, 8, 0.5, 5).unwrap(), None).unwrap();
    let y = inst.measure(&ops).unwrap();
    let run = run_three_level(
        &y,
        &ops,
        &AltGdminConfig::default(),
        &PipelineOptions::plain(),
    )
    .unwrap();
    assert!(run.model.mean.iter().all(|z| z.norm() == 0.0));
    assert_eq!(run.model.residual.frobenius_norm(), 0.0);
    assert_eq!(run.report.algorithm, "altgdmin");
    assert!(run
        .report
        .stage_timings
        .iter()
        .all(|s| s.stage == "altgdmin"));
}

#[test]
fn ista_recovers_a_sparse_residual_seen_through_a_full_mask() {
    let grid = Grid::new(32, 32);
    let inst = gen_phantom_sequence(grid, 16, 1.0, ResidualMode::TemporalSparse, 6).unwrap();
    let ops = fourier_stack(&full_mask(grid, 16), None).unwrap();
    // Hand it the exact smooth part so only the residual is left in the data.
    let y = inst.measure(&ops).unwrap();
    let outcome = mec_sparse_ista(&y, &ops, &inst.mean, &inst.lowrank).unwrap();
    let err =
        outcome.estimate.sub(&inst.residual).frobenius_norm() / inst.residual.frobenius_norm();
    // Soft thresholding at 0.1% of the peak biases only the small coefficients.
    assert!(err < 0.05, "{err}");
    assert!(outcome.iterations >= 1);
    assert_eq!(outcome.estimate.shape(), (grid.len(), 16));
}

#[test]
fn mismatched_inputs_fail_cleanly() {
    let grid = Grid::new(32, 32);
    let inst = gen_phantom_sequence(grid, 8, 1.0, ResidualMode::None, 0).unwrap();
    let ops = fourier_stack(&bernoulli_masks(grid, 8, 0.5, 0).unwrap(), None).unwrap();
    let y = inst.measure(&ops).unwrap();
    assert!(run_altgdmin_mri(&y, &ops[..7], &AltGdminConfig::default()).is_err());
    let mut report = lrccs::report::ReconReport::new("mri", &AltGdminConfig::default());
    let (model, _) = run_altgdmin_mri(&y, &ops, &AltGdminConfig::default()).unwrap();
    assert!(evaluate_model(&mut report, &model, &ComplexMatrix::zeros(grid.len(), 7)).is_err());
}
