use std::fs;

use homog::ensemble::EnsembleSpec;
use homog::study::output::{self, SAMPLES_FILE};
use homog::study::{run_study, sample_rows, CellStatus, StudyKind, StudyPlan, Summary};
use homog::tensor::identity;
use homog::Error;

fn poisson_plan() -> StudyPlan {
    let mut p = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
    p.spacing = 0.5;
    p.n_samples = 8;
    p.seed = 31;
    p
}

fn constant_plan() -> StudyPlan {
    let mut p = StudyPlan::new(EnsembleSpec::constant(2, &identity(2)));
    p.spacing = 0.5;
    p.n_samples = 8;
    p
}

fn run(plan: &StudyPlan, kind: StudyKind, workers: usize) -> homog::study::StudyRecord {
    run_study(plan, kind, workers, &[], &mut |_, _| Ok(())).unwrap()
}

#[test]
fn variance_rows_are_reproducible_across_worker_counts() {
    let mut plan = poisson_plan();
    plan.l_values = vec![8.0];
    plan.t_per_l = Some(1.0);
    let a = run(&plan, StudyKind::Variance, 1);
    let b = run(&plan, StudyKind::Variance, 1);
    let c = run(&plan, StudyKind::Variance, 3);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows.len(), 8);
    for (x, y) in a.rows.iter().zip(&c.rows) {
        assert_eq!(x.field_hash, y.field_hash);
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1e-300));
        }
    }
    assert!(a.rows.iter().all(|r| r.residual <= plan.solver.tol));
    let hashes: std::collections::BTreeSet<u64> = a.rows.iter().map(|r| r.field_hash).collect();
    assert_eq!(hashes.len(), 8, "each sample must see its own realization");
}

#[test]
fn gradient_study_couples_realizations_across_t() {
    let mut plan = poisson_plan();
    plan.l_values = vec![8.0];
    plan.t_values = vec![4.0, 8.0, 16.0];
    plan.n_samples = 8;
    let rec = run(&plan, StudyKind::Gradient, 1);
    assert_eq!(rec.rows.len(), 24);
    for i in 0..8 {
        let h: Vec<u64> = rec.rows.iter().filter(|r| r.sample_index == i).map(|r| r.field_hash).collect();
        assert_eq!(h.len(), 3);
        assert!(h.iter().all(|&x| x == h[0]));
    }
    assert!(rec.rows.iter().all(|r| r.values[0] > 0.0 && r.values[1] > 0.0));
}

#[test]
fn constant_ensemble_studies_are_degenerate() {
    let mut plan = constant_plan();
    plan.l_values = vec![4.0, 8.0, 16.0];
    plan.t_per_l = Some(1.0);
    match run(&plan, StudyKind::Variance, 1).summary {
        Summary::Variance(s) => {
            assert!(s.degenerate);
            for g in &s.groups {
                assert!(g.var_without.value < 1e-24, "{}", g.var_without.value);
                assert!((g.mean_without.value - 1.0).abs() < 1e-8);
            }
        }
        other => panic!("unexpected summary {other:?}"),
    }

    let mut plan = constant_plan();
    plan.l_values = vec![4.0];
    plan.t_values = vec![4.0, 8.0, 16.0];
    let rec = run(&plan, StudyKind::Gradient, 1);
    assert!(rec.rows.iter().all(|r| r.values[0] < 1e-20));

    let mut plan = constant_plan();
    plan.t_values = vec![4.0, 8.0, 16.0];
    match run(&plan, StudyKind::Moments, 1).summary {
        Summary::Moments(s) => {
            for m in &s.per_cell[0].table {
                assert!(m.moment_phi < 1e-8 && m.moment_grad < 1e-8);
            }
        }
        other => panic!("unexpected summary {other:?}"),
    }
}

#[test]
fn sensitivity_ratio_is_finite_on_constant_background() {
    let mut plan = constant_plan();
    plan.ensemble.contrast = 0.25;
    plan.t_values = vec![16.0];
    plan.distances = vec![3.0, 6.0];
    plan.random_fills = 2;
    let cell = &plan.cells(StudyKind::Sensitivity).unwrap()[0];
    let rows = sample_rows(&plan, StudyKind::Sensitivity, cell, 0).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let (osc, h_t, ratio) = (r.values[1], r.values[2], r.values[4]);
        assert!(osc > 0.0 && h_t > 0.0);
        assert!(ratio.is_finite() && ratio > 0.0);
    }
}

#[test]
fn resumed_directory_skips_completed_cells() {
    let dir = tempfile_dir("resume");
    let mut plan = poisson_plan();
    plan.l_values = vec![8.0, 12.0];
    plan.t_per_l = Some(0.5);
    let first = output::run_into_dir(&dir, &plan, StudyKind::Variance, 1).unwrap();
    assert!(first.cells.iter().all(|c| c.status == CellStatus::Completed));

    // drop the second cell and rerun
    let text = fs::read_to_string(dir.join(SAMPLES_FILE)).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("1,")).collect();
    fs::write(dir.join(SAMPLES_FILE), kept.join("\n") + "\n").unwrap();
    let second = output::run_into_dir(&dir, &plan, StudyKind::Variance, 1).unwrap();
    assert_eq!(second.cells[0].status, CellStatus::Resumed);
    assert_eq!(second.cells[1].status, CellStatus::Completed);
    assert_eq!(first.rows, second.rows);
    assert_eq!(first.summary, second.summary);

    // a half-written cell cannot be resumed
    let text = fs::read_to_string(dir.join(SAMPLES_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    fs::write(dir.join(SAMPLES_FILE), lines[..lines.len() - 3].join("\n") + "\n").unwrap();
    let err = output::run_into_dir(&dir, &plan, StudyKind::Variance, 1).unwrap_err();
    assert!(matches!(err, Error::InconsistentResume(_)), "{err}");

    // nor can a different plan
    fs::write(dir.join(SAMPLES_FILE), text).unwrap();
    plan.seed += 1;
    let err = output::run_into_dir(&dir, &plan, StudyKind::Variance, 1).unwrap_err();
    assert!(matches!(err, Error::InconsistentResume(_)), "{err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failing_cell_does_not_abort_study() {
    let mut plan = poisson_plan();
    plan.l_values = vec![8.0, 12.0];
    plan.t_per_l = Some(0.5);
    plan.solver.max_iter = Some(1);
    let rec = run(&plan, StudyKind::Variance, 1);
    assert_eq!(rec.failed_cells(), 2);
    assert!(rec.cells.iter().all(|c| c.failure.is_some()));
}

fn tempfile_dir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("homog-study-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}
