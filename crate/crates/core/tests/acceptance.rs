//! Acceptance suite: one `PASS`/`FAIL` line per criterion.
//!
//! Every criterion runs by default except the hour-scale systematic-error
//! study (5), which runs only when `HOMOG_ACCEPT_FULL=1` and is reported as
//! `SKIP` otherwise. The process exits nonzero if any criterion
//! that ran has failed.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use homog::ensemble::{coefficient_at, realize_on_grid, EnsembleSpec};
use homog::estimator::energy_estimate;
use homog::green::{annulus_cells, annulus_gradient_norms, pointwise_decay_probe};
use homog::grid::{self, AveragingMask};
use homog::sgcheck::{a11, ergodic_average_probe, run_battery};
use homog::solver::{green_column, FaceAveraging, Operator, OperatorSpec, SolverSettings};
use homog::study::{run_study, StudyKind, StudyPlan, Summary};
use homog::tensor::{bilinear, identity, Tensor};
use homog::{CoefficientField, Grid, GridFunction, Result};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn full_run() -> bool {
    std::env::var("HOMOG_ACCEPT_FULL").map(|v| v == "1").unwrap_or(false)
}

fn e(i: usize) -> [f64; 3] {
    let mut v = [0.0; 3];
    v[i] = 1.0;
    v
}

fn c1_trivial_field() -> Result<Outcome> {
    let sym: Tensor = [[1.0, 0.2, 0.0], [0.2, 0.5, 0.0], [0.0, 0.0, 0.0]];
    let nonsym: Tensor = [[1.0, 0.3, 0.0], [-0.1, 0.6, 0.0], [0.0, 0.0, 0.0]];
    let grid = Grid::centered(2, 8.0, 0.25)?;
    let mask = AveragingMask::new(&grid, 3.0)?;
    let settings = SolverSettings::with_tol(1e-12);
    let (mut max_phi, mut max_err) = (0.0f64, 0.0f64);
    for a in [sym, nonsym] {
        let field = CoefficientField::constant(&grid, a);
        let spec = OperatorSpec::new(&field, 16.0);
        let op = Operator::new(&spec, FaceAveraging::Harmonic)?;
        let adj = Operator::new(&spec.adjoint(), FaceAveraging::Harmonic)?;
        for i in 0..2 {
            let phi = op.solve_corrector(&e(i), &settings, None)?;
            max_phi = max_phi.max(phi.phi.max_abs());
            for j in 0..2 {
                let phi_adj = if op.is_symmetric() {
                    op.solve_corrector(&e(j), &settings, None)?
                } else {
                    adj.solve_corrector(&e(j), &settings, None)?
                };
                max_phi = max_phi.max(phi_adj.phi.max_abs());
                let est = energy_estimate(&op, &phi, &phi_adj, &mask)?;
                let exact = bilinear(2, &e(j), &a, &e(i));
                max_err = max_err.max((est.value_with - exact).abs()).max((est.value_without - exact).abs());
            }
        }
    }
    Ok(outcome(max_phi <= 1e-8 && max_err <= 1e-8, format!("max|phi| = {max_phi:.2e}, max|A - xi'.A0 xi| = {max_err:.2e} (tol 1e-8)")))
}

/// Harmonic and arithmetic means of the laminate profile across one period,
/// by midpoint quadrature of the pointwise coefficient.
fn laminate_means(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let n = 4096;
    let period = spec.band_width * spec.cell_values.len() as f64;
    let (mut inv, mut sum) = (0.0, 0.0);
    for k in 0..n {
        let x = (k as f64 + 0.5) / n as f64 * period;
        let a = coefficient_at(spec, 0, &[x, 0.3, 0.0])?[0][0];
        inv += 1.0 / a;
        sum += a;
    }
    Ok((n as f64 / inv, sum / n as f64))
}

fn c2_laminate() -> Result<Outcome> {
    let spec = EnsembleSpec::laminate(2, 0.25, &[0.25, 1.0]);
    let (harmonic, arithmetic) = laminate_means(&spec)?;
    let grid = Grid::centered(2, 24.0, 0.125)?;
    let field = realize_on_grid(&spec, &grid, 0)?;
    let op = Operator::new(&OperatorSpec::new(&field, 1e4), FaceAveraging::Harmonic)?;
    let mask = AveragingMask::new(&grid, 16.0)?;
    let settings = SolverSettings::default();
    let mut rel = Vec::new();
    let mut values = Vec::new();
    for (i, oracle) in [(0, harmonic), (1, arithmetic)] {
        let s = op.solve_corrector(&e(i), &settings, None)?;
        let v = energy_estimate(&op, &s, &s, &mask)?.value_without;
        values.push(v);
        rel.push((v / oracle - 1.0).abs());
    }
    let worst = rel.iter().cloned().fold(0.0, f64::max);
    Ok(outcome(
        worst <= 0.03,
        format!(
            "A11 = {:.4} vs {harmonic:.4}, A22 = {:.4} vs {arithmetic:.4}, worst rel. error {:.2}% (tol 3%)",
            values[0],
            values[1],
            100.0 * worst
        ),
    ))
}

fn c3_c4_variance() -> Result<(Outcome, Outcome)> {
    let mut plan = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
    plan.l_values = vec![8.0, 16.0, 32.0];
    plan.t_per_l = Some(1.0);
    plan.n_samples = 200;
    plan.spacing = 0.25;
    plan.seed = 20240501;
    let rec = run_study(&plan, StudyKind::Variance, 1, &[], &mut |_, _| Ok(()))?;
    let Summary::Variance(s) = &rec.summary else { unreachable!() };
    let fit = s.fit("var_without");
    let zero = s.fit("var_zero_unscaled");
    let c3 = match fit {
        Some(f) => outcome(
            (-2.5..=-1.6).contains(&f.slope),
            format!("slope of Var(A) over L = 8,16,32 (T = L): {:.3} +- {:.3} (target [-2.5, -1.6])", f.slope, f.ci),
        ),
        None => outcome(false, "no slope fit (degenerate variance)".into()),
    };
    let c4 = match (fit, zero) {
        (Some(f), Some(z)) => outcome(
            z.slope >= f.slope + 0.5,
            format!("zero-order variance slope {:.3} vs A slope {:.3} (need >= {:.3})", z.slope, f.slope, f.slope + 0.5),
        ),
        _ => outcome(false, "no slope fit (degenerate variance)".into()),
    };
    Ok((c3, c4))
}

fn c5_systematic() -> Result<Outcome> {
    let mut plan = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
    plan.l_values = vec![96.0];
    plan.t_values = vec![16.0, 32.0, 64.0, 128.0, 256.0];
    plan.n_samples = 600;
    plan.spacing = 0.5;
    plan.seed = 20240502;
    let rec = run_study(&plan, StudyKind::Systematic, 1, &[], &mut |_, _| Ok(()))?;
    let Summary::Systematic(s) = &rec.summary else { unreachable!() };
    let cell = &s.per_l[0];
    let errors: Vec<String> = cell.points.iter().map(|p| format!("{:.2e}", p.error.value)).collect();
    Ok(match &cell.fit {
        Some(f) => outcome(
            cell.verdict == homog::study::Verdict::Ok && (-1.25..=-0.75).contains(&f.slope),
            format!("verdict {:?}, slope {:.3} +- {:.3} (target [-1.25, -0.75]), |A_T - ref| = [{}]", cell.verdict, f.slope, f.ci, errors.join(", ")),
        ),
        None => outcome(false, format!("verdict {:?}, no fit; notes: {}", cell.verdict, cell.notes.join("; "))),
    })
}

fn c6_gradient() -> Result<Outcome> {
    let mut plan = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
    plan.l_values = vec![16.0];
    plan.t_values = vec![32.0, 64.0, 128.0, 256.0, 512.0];
    plan.n_samples = 50;
    plan.spacing = 0.5;
    plan.seed = 20240503;
    let rec = run_study(&plan, StudyKind::Gradient, 1, &[], &mut |_, _| Ok(()))?;
    let Summary::Gradient(s) = &rec.summary else { unreachable!() };
    Ok(match &s.per_l[0].fit_grad {
        Some(f) => outcome(
            (-1.3..=-0.7).contains(&f.slope),
            format!("slope of D_T over T = 32..512: {:.3} +- {:.3} (target [-1.3, -0.7])", f.slope, f.ci),
        ),
        None => outcome(false, "no fit (degenerate)".into()),
    })
}

fn c7_moments() -> Result<Outcome> {
    let mut plan = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
    plan.t_values = vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];
    plan.n_samples = 50;
    plan.spacing = 0.5;
    plan.q_values = vec![2.0];
    plan.seed = 20240504;
    let rec = run_study(&plan, StudyKind::Moments, 1, &[], &mut |_, _| Ok(()))?;
    let Summary::Moments(s) = &rec.summary else { unreachable!() };
    let c = &s.per_cell[0];
    let growth = c
        .phi_growth
        .as_ref()
        .map(|g| format!("slope {:.4} +- {:.4}, R^2 {:.3}", g.slope, g.std_error, g.r_squared))
        .unwrap_or_else(|| "no fit".into());
    Ok(outcome(
        c.phi_growth_passed && c.grad_flat_passed,
        format!("moment_phi^2 vs ln T: {growth} (need slope > 0, R^2 >= 0.8); moment_grad max/min {:.3} (need <= 2)", c.grad_ratio),
    ))
}

fn constant_column(dim: usize, radius: f64, spacing: f64, massive: f64) -> Result<GridFunction> {
    let grid = Grid::centered(dim, radius, spacing)?;
    let field = CoefficientField::constant(&grid, identity(dim));
    let op = Operator::new(&OperatorSpec::new(&field, massive), FaceAveraging::Harmonic)?;
    Ok(green_column(&op, grid.multi_index(grid.center_cell()), &SolverSettings::with_tol(1e-10))?.0)
}

fn c8_green() -> Result<Outcome> {
    let g = constant_column(2, 64.0, 0.5, 1e8)?;
    let table = annulus_gradient_norms(&g, &[2.0, 4.0, 8.0, 16.0], &[2.0])?;
    let exponent = table.fit_for(2.0).map(|f| f.exponent).unwrap_or(f64::NAN);
    let exponent_ok = (exponent + 1.0).abs() <= 0.15;

    // d = 3: the annulus maximum against the screened free-space kernel at
    // the same cell distance
    let t3 = 64.0;
    let g3 = constant_column(3, 24.0, 0.5, t3)?;
    let src = g3.grid.center(g3.grid.center_cell());
    let mut worst = 0.0f64;
    for r in [2.0, 3.0, 4.0, 6.0, 8.0] {
        let (value, dist) = annulus_cells(&g3.grid, &src, r)
            .into_iter()
            .map(|i| {
                let x = g3.grid.center(i);
                (g3.values[i], (0..3).map(|k| (x[k] - src[k]).powi(2)).sum::<f64>().sqrt())
            })
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        let kernel = (-dist / t3.sqrt()).exp() / (4.0 * PI * dist);
        worst = worst.max((value / kernel - 1.0).abs());
    }
    let pointwise_ok = worst <= 0.10;

    let mut rates = Vec::new();
    for t in [64.0f64, 256.0] {
        let s = t.sqrt();
        let g = constant_column(2, 4.0 * s, 0.5, t)?;
        rates.push(pointwise_decay_probe(&g, t, &[0.5 * s, s, 1.5 * s, 2.0 * s])?.rate);
    }
    let ratio = rates[0] / rates[1];
    let rate_ok = rates.iter().all(|&c| c > 0.0) && (ratio / 2.0 - 1.0).abs() <= 0.3;
    Ok(outcome(
        exponent_ok && pointwise_ok && rate_ok,
        format!(
            "d=2 gradient exponent {exponent:.3} (target -1 +- 0.15); d=3 worst pointwise deviation {:.1}% (tol 10%); rates {:.4}/{:.4}, ratio {ratio:.3} (target 2 +- 30%)",
            100.0 * worst,
            rates[0],
            rates[1]
        ),
    ))
}

fn c9_sg() -> Result<Outcome> {
    let report = run_battery(0.25, 1.0, &[1, 2], &SolverSettings::with_tol(1e-12))?;
    let failed = report.sg.iter().filter(|v| !v.passed).count() + report.q_sg.iter().filter(|v| !v.passed).count();
    Ok(outcome(
        report.passed && report.sg.len() >= 18,
        format!("{} SG and {} q-SG checks, {failed} failed", report.sg.len(), report.q_sg.len()),
    ))
}

fn c10_ergodic() -> Result<Outcome> {
    let spec = EnsembleSpec::poisson(2, 0.25, 20240505);
    let report = ergodic_average_probe(&spec, &a11, &[4.0, 8.0, 16.0, 32.0], 400, 0.25)?;
    Ok(match &report.fit {
        Some(f) => outcome((f.slope + 2.0).abs() <= 0.3, format!("slope {:.3} +- {:.3} (target -2 +- 0.3)", f.slope, f.std_error)),
        None => outcome(false, "degenerate".into()),
    })
}

fn c11_sensitivity() -> Result<Outcome> {
    let mut plan = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
    plan.t_values = vec![64.0];
    plan.n_samples = 50;
    plan.spacing = 0.5;
    plan.distances = vec![6.0, 12.0, 24.0];
    plan.seed = 20240506;
    let rec = run_study(&plan, StudyKind::Sensitivity, 1, &[], &mut |_, _| Ok(()))?;
    let Summary::Sensitivity(s) = &rec.summary else { unreachable!() };
    let c = &s.per_cell[0];
    let p95: Vec<String> = c.per_distance.iter().map(|d| format!("{}: {:.3}", d.distance, d.p95)).collect();
    Ok(outcome(c.passed, format!("p95 ratio by distance [{}], max/min {:.3} (need <= 3)", p95.join(", "), c.stability)))
}

fn random_field(grid: &Grid, seed: u64, symmetric: bool) -> CoefficientField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let mut field = CoefficientField::constant(grid, identity(d));
    for a in field.cells.iter_mut() {
        for i in 0..d {
            a[i][i] = rng.random_range(0.3..1.0);
        }
        let off = rng.random_range(-0.1..0.1);
        a[0][1] = off;
        a[1][0] = if symmetric { off } else { -off };
    }
    field
}

fn random_values(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn check(cond: bool, what: &str) -> std::result::Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(what.to_string()))
    }
}

fn c12_properties() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 32, failure_persistence: None, ..Config::default() });
    let mut failures = Vec::new();
    let mut record = |name: &str, r: std::result::Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    let sizes = (2usize..=3, 3usize..8, any::<u64>());

    record(
        "ellipticity per cell",
        runner.run(&(any::<u64>(), 0u64..500, 0usize..3), |(seed, k, which)| {
            let spec = match which {
                0 => EnsembleSpec::poisson(2, 0.25, seed),
                1 => EnsembleSpec::checkerboard(2, 0.25, Vec::new(), seed),
                _ => EnsembleSpec::poisson(3, 0.25, seed),
            };
            let grid = Grid::centered(spec.dimension, 3.0, 0.5).unwrap();
            let field = realize_on_grid(&spec, &grid, k).unwrap();
            check(field.check_ellipticity(0.25).is_ok(), "cell below ellipticity")
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "summation by parts",
        runner.run(&sizes, |(d, n, seed)| {
            let grid = Grid::from_parts(d, [n, n + 1, if d == 3 { n } else { 1 }], 0.5, [0.0; 3]).unwrap();
            let u = GridFunction::from_values(&grid, random_values(grid.len(), seed)).unwrap();
            let w = GridFunction::from_values(&grid, random_values(grid.len(), seed ^ 1)).unwrap();
            let v = grid::gradient(&w);
            let lhs = grid::gradient(&u).inner(&v);
            let rhs = -u.inner(&grid::divergence(&v));
            check((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "discrete integration by parts")
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "operator symmetry",
        runner.run(&sizes, |(d, n, seed)| {
            let grid = Grid::from_parts(d, [n, n + 1, if d == 3 { n } else { 1 }], 0.5, [0.0; 3]).unwrap();
            let field = random_field(&grid, seed, true);
            let op = Operator::new(&OperatorSpec::new(&field, 3.0), FaceAveraging::Harmonic).unwrap();
            let u = random_values(grid.len(), seed ^ 2);
            let v = random_values(grid.len(), seed ^ 3);
            let (mut au, mut av) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
            op.apply(&u, &mut au);
            op.apply(&v, &mut av);
            let l: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
            let r: f64 = av.iter().zip(&u).map(|(a, b)| a * b).sum();
            check((l - r).abs() <= 1e-12 * l.abs().max(1.0), "<Lu, v> != <u, Lv>")
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "energy identity",
        runner.run(&(any::<u64>(), 1.0f64..200.0, any::<bool>()), |(seed, t, symmetric)| {
            let grid = Grid::centered(2, 4.0, 0.5).unwrap();
            let field = random_field(&grid, seed, symmetric);
            let op = Operator::new(&OperatorSpec::new(&field, t), FaceAveraging::Harmonic).unwrap();
            let settings = SolverSettings::with_tol(1e-10);
            let s = op.solve_corrector(&e(0), &settings, None).unwrap();
            check(s.energy.defect <= 10.0 * settings.tol, "energy identity defect above 10 tol")
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "mask normalization",
        runner.run(&(2usize..=3, 0.5f64..6.0), |(d, l)| {
            let grid = Grid::centered(d, 6.0, 0.5).unwrap();
            let mask = AveragingMask::new(&grid, l).unwrap();
            let total = mask.values().iter().sum::<f64>() * grid.cell_volume();
            let inside = mask.support().iter().all(|&(i, w)| {
                let x = grid.center(i);
                w >= 0.0 && (0..d).map(|k| x[k] * x[k]).sum::<f64>().sqrt() <= l
            });
            check((total - 1.0).abs() <= 1e-12 && inside, "mask not normalized or leaks outside B_L")
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "power-mean monotonicity",
        runner.run(&proptest::collection::vec(0.0f64..1.0, 33 * 33), |vals| {
            let grid = Grid::centered(2, 8.0, 0.5).unwrap();
            let mut v = vals;
            v[grid.center_cell()] = 2.0;
            let g = GridFunction::from_values(&grid, v).unwrap();
            let t = annulus_gradient_norms(&g, &[1.0, 2.0, 4.0], &[1.0, 1.5, 2.0, 3.0]).unwrap();
            check(t.monotone_in_p, "power means decrease in p")
        })
        .map_err(|e| e.to_string()),
    );
    record(
        "seed determinism",
        runner.run(&(any::<u64>(), 0u64..1000), |(seed, k)| {
            let spec = EnsembleSpec::poisson(2, 0.25, seed);
            let small = Grid::centered(2, 4.0, 0.5).unwrap();
            let big = Grid::centered(2, 8.0, 0.5).unwrap();
            let a = realize_on_grid(&spec, &small, k).unwrap();
            let b = realize_on_grid(&spec, &small, k).unwrap();
            let c = realize_on_grid(&spec, &big, k).unwrap();
            let nested = (0..small.len()).all(|i| {
                let j = big.locate(&small.center(i)).unwrap();
                c.cells[j] == a.cells[i]
            });
            check(a.content_hash() == b.content_hash() && nested, "realization depends on more than (seed, index, position)")
        })
        .map_err(|e| e.to_string()),
    );
    let passed = failures.is_empty();
    let detail = if passed { "7 property suites x 32 cases".to_string() } else { failures.join("; ") };
    outcome(passed, detail)
}

fn main() -> ExitCode {
    // `cargo test` forwards harness flags; `--list` expects no output.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let full = full_run();
    let mut failed = 0;
    let mut report = |id: &str, name: &str, start: Instant, r: Result<Outcome>| {
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(o) => {
                if !o.passed {
                    failed += 1;
                }
                println!("{id} {} {name}: {} [{secs:.0} s]", if o.passed { "PASS" } else { "FAIL" }, o.detail);
            }
            Err(err) => {
                failed += 1;
                println!("{id} FAIL {name}: error: {err} [{secs:.0} s]");
            }
        }
    };
    let skip = |id: &str, name: &str, runtime: &str| {
        println!("{id} SKIP {name}: set HOMOG_ACCEPT_FULL=1 to run ({runtime})");
    };

    let t = Instant::now();
    report("C1", "trivial-field exactness", t, c1_trivial_field());
    let t = Instant::now();
    report("C2", "laminate oracle", t, c2_laminate());
    let t = Instant::now();
    match c3_c4_variance() {
        Ok((c3, c4)) => {
            report("C3", "variance rate d=2", t, Ok(c3));
            report("C4", "zero-order term variance", t, Ok(c4));
        }
        Err(err) => {
            let msg = err.to_string();
            report("C3", "variance rate d=2", t, Err(err));
            report("C4", "zero-order term variance", t, Err(homog::Error::InsufficientData(msg)));
        }
    }
    if full {
        let t = Instant::now();
        report("C5", "systematic error d=2", t, c5_systematic());
    } else {
        skip("C5", "systematic error d=2", "about 1 h");
    }
    let t = Instant::now();
    report("C6", "dyadic gradient differences d=2", t, c6_gradient());
    let t = Instant::now();
    report("C7", "corrector moments d=2", t, c7_moments());
    let t = Instant::now();
    report("C8", "Green bounds, constant coefficients", t, c8_green());
    let t = Instant::now();
    report("C9", "spectral-gap brute force", t, c9_sg());
    let t = Instant::now();
    report("C10", "ergodicity probe", t, c10_ergodic());
    let t = Instant::now();
    report("C11", "sensitivity probe", t, c11_sensitivity());
    let t = Instant::now();
    report("C12", "property suites", t, Ok(c12_properties()));

    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
