use std::io::Write;

use serde::Serialize;

use homog::ensemble::realize_on_grid;
use homog::estimator::energy_estimate;
use homog::green::{annealed_gradient_probe, green_probe, AnnealedProbe};
use homog::grid::{AveragingMask, Grid};
use homog::sgcheck::run_battery;
use homog::solver::{Operator, OperatorSpec};
use homog::study::output::{self as study_out, CELLS_FILE, PLAN_FILE, SAMPLES_FILE, SLOPES_FILE, SUMMARY_FILE};
use homog::study::{StudyKind, StudyPlan};
use homog::{CoefficientField, GridFunction, Vector};

use crate::config::{DumpFormat, GreenConfig, GreenMode, SampleConfig, SgConfig, SolveConfig};
use crate::manifest::{Outputs, RunManifest};
use crate::CliError;

/// What every command needs besides its own config.
pub struct Context {
    pub command: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub started: f64,
}

impl Context {
    fn manifest<T: Serialize>(&self, config: &T, master_seed: u64) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            version: homog::VERSION.to_string(),
            master_seed,
            workers: self.workers,
            started: self.started,
            finished: self.started,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            outputs: Vec::new(),
        }
    }
}

/// One JSON object per line on stderr.
fn log<T: Serialize>(value: &T) {
    if let Ok(s) = serde_json::to_string(value) {
        let _ = writeln!(std::io::stderr(), "{s}");
    }
}

fn direction(v: &[f64], dim: usize, what: &str) -> Result<Vector, CliError> {
    if v.is_empty() || v.len() > dim {
        return Err(CliError::Config(format!("{what} must have between 1 and {dim} components")));
    }
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    Ok(out)
}

fn dump_field(out: &mut Outputs, stem: &str, f: &CoefficientField, format: DumpFormat) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let name = match format {
        DumpFormat::Binary => {
            f.write_binary(&mut buf)?;
            format!("{stem}.bin")
        }
        DumpFormat::Csv => {
            f.write_csv(&mut buf)?;
            format!("{stem}.csv")
        }
    };
    out.write(&name, &buf)
}

fn dump_function(out: &mut Outputs, stem: &str, f: &GridFunction, format: DumpFormat) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let name = match format {
        DumpFormat::Binary => {
            f.write_binary(&mut buf)?;
            format!("{stem}.bin")
        }
        DumpFormat::Csv => {
            f.write_csv(&mut buf)?;
            format!("{stem}.csv")
        }
    };
    out.write(&name, &buf)
}

pub fn cmd_sample(ctx: &Context, mut cfg: SampleConfig, out: &mut Outputs) -> Result<RunManifest, CliError> {
    if let Some(s) = ctx.seed {
        cfg.ensemble.master_seed = s;
    }
    let grid = Grid::centered(cfg.ensemble.dimension, cfg.radius, cfg.spacing)?;
    let field = realize_on_grid(&cfg.ensemble, &grid, cfg.sample_index)?;
    dump_field(out, "field", &field, cfg.format)?;
    log(&serde_json::json!({
        "event": "sample",
        "cells": grid.len(),
        "field_hash": field.content_hash(),
        "ellipticity": field.ellipticity(),
    }));
    Ok(ctx.manifest(&cfg, cfg.ensemble.master_seed))
}

pub fn cmd_solve(ctx: &Context, mut cfg: SolveConfig, out: &mut Outputs) -> Result<RunManifest, CliError> {
    if let Some(s) = ctx.seed {
        cfg.ensemble.master_seed = s;
    }
    let d = cfg.ensemble.dimension;
    let xi = direction(&cfg.xi, d, "xi")?;
    let xi_prime = direction(cfg.xi_prime.as_deref().unwrap_or(&cfg.xi), d, "xi_prime")?;
    cfg.solver.validate()?;
    let grid = Grid::centered(d, cfg.radius, cfg.spacing)?;
    let field = realize_on_grid(&cfg.ensemble, &grid, cfg.sample_index)?;
    let spec = OperatorSpec::new(&field, cfg.massive);
    spec.validate()?;
    let op = Operator::new(&spec, cfg.solver.face_averaging)?;
    let phi = op.solve_corrector(&xi, &cfg.solver, None)?;
    let mut diagnostics = vec![phi.diagnostics.to_json_line()];
    dump_function(out, "phi", &phi.phi, cfg.format)?;

    let adjoint = if op.is_symmetric() && xi_prime == xi {
        phi.clone()
    } else {
        let (aop, name) = if op.is_symmetric() {
            (op.clone(), "phi_prime")
        } else {
            (Operator::new(&spec.adjoint(), cfg.solver.face_averaging)?, "phi_adjoint")
        };
        let s = aop.solve_corrector(&xi_prime, &cfg.solver, None)?;
        diagnostics.push(s.diagnostics.to_json_line());
        dump_function(out, name, &s.phi, cfg.format)?;
        s
    };
    out.write("diagnostics.jsonl", (diagnostics.join("\n") + "\n").as_bytes())?;

    if let Some(l) = cfg.mask_radius {
        let mask = AveragingMask::new(&grid, l)?;
        let mut e = energy_estimate(&op, &phi, &adjoint, &mask)?;
        e.sample_index = cfg.sample_index;
        e.seed = cfg.ensemble.master_seed;
        out.write_json("estimate.json", &e)?;
    }
    log(&serde_json::json!({
        "event": "solve",
        "iterations": phi.diagnostics.iterations,
        "relative_residual": phi.diagnostics.relative_residual,
        "energy_defect": phi.energy.defect,
        "max_abs_phi": phi.phi.max_abs(),
    }));
    Ok(ctx.manifest(&cfg, cfg.ensemble.master_seed))
}

pub fn cmd_study(
    ctx: &Context,
    kind: StudyKind,
    mut plan: StudyPlan,
    out: &mut Outputs,
) -> Result<(RunManifest, usize), CliError> {
    if let Some(s) = ctx.seed {
        plan.seed = s;
    }
    let dir = out.dir().to_path_buf();
    std::fs::create_dir_all(&dir)?;
    let cells = plan.cells(kind)?;
    study_out::reconcile_plan(&dir, kind, &plan)?;
    let resume = study_out::load_rows(&dir, kind)?;
    study_out::check_resume(&cells, kind, &resume)?;
    let record = homog::study::run_study(&plan, kind, ctx.workers, &resume, &mut |cell, rows| {
        study_out::append_cell(&dir, kind, rows)?;
        log(&serde_json::json!({
            "event": "cell",
            "cell": cell.index,
            "L": cell.l,
            "T_values": cell.t_values,
            "R": cell.r,
            "rows": rows.len(),
            "iterations": rows.iter().map(|r| r.iterations).sum::<usize>(),
        }));
        Ok(())
    })?;
    for c in &record.cells {
        log(&serde_json::json!({ "event": "cell_status", "cell": c.index, "status": c.status, "failure": c.failure }));
    }
    study_out::write_results(&dir, &record)?;
    for name in [PLAN_FILE, SAMPLES_FILE, SUMMARY_FILE, CELLS_FILE, SLOPES_FILE] {
        if out.path(name).exists() {
            out.record(name);
        }
    }
    let seed = plan.seed;
    Ok((ctx.manifest(&serde_json::json!({ "kind": kind, "plan": plan }), seed), record.failed_cells()))
}

pub fn cmd_green(ctx: &Context, mut cfg: GreenConfig, out: &mut Outputs) -> Result<RunManifest, CliError> {
    if let Some(s) = ctx.seed {
        cfg.ensemble.master_seed = s;
    }
    match cfg.mode {
        GreenMode::Quenched => {
            let grid = Grid::centered(cfg.ensemble.dimension, cfg.box_radius, cfg.spacing)?;
            let field = realize_on_grid(&cfg.ensemble, &grid, cfg.sample_index)?;
            let report = green_probe(&field, cfg.massive, &cfg.radii, &cfg.p_sweep, &cfg.solver)?;
            out.write_json("green_report.json", &report)?;
            out.write("annulus.csv", report.gradients.to_csv().as_bytes())?;
            log(&serde_json::json!({ "event": "green", "pass_flags": report.pass_flags }));
        }
        GreenMode::Annealed => {
            let probe = AnnealedProbe {
                massive: cfg.massive,
                n_samples: cfg.n_samples,
                radii: cfg.radii.clone(),
                spacing: cfg.spacing,
                box_radius: cfg.box_radius,
            };
            let report = annealed_gradient_probe(&cfg.ensemble, &probe, &cfg.solver)?;
            out.write_json("annealed_report.json", &report)?;
            log(&serde_json::json!({ "event": "annealed", "slope": report.fit.slope, "tail": report.tail }));
        }
    }
    Ok(ctx.manifest(&cfg, cfg.ensemble.master_seed))
}

pub fn cmd_sgcheck(ctx: &Context, cfg: SgConfig, out: &mut Outputs) -> Result<RunManifest, CliError> {
    let report = run_battery(cfg.contrast, cfg.ell, &cfg.q_values, &cfg.solver)?;
    out.write_json("sgcheck_report.json", &report)?;
    log(&serde_json::json!({
        "event": "sgcheck",
        "passed": report.passed,
        "sg_checks": report.sg.len(),
        "q_sg_checks": report.q_sg.len(),
    }));
    Ok(ctx.manifest(&cfg, 0))
}
