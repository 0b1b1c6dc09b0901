//! Monte Carlo studies: sampling cells of `(L, T)` values, running the
//! solves per realization and fitting scaling laws to the results.
//!
//! All randomness flows from `(seed, sample_index)`, so the rows of a cell
//! do not depend on the worker count or the order in which samples run.
//! Analyses are pure functions of the rows; they can be fed synthetic data.

mod analysis;
pub mod output;
mod plan;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{derive_seed, realize_on_grid};
use crate::error::{Error, Result};
use crate::estimator::{energy_estimate, masked_face_gradient_energy, moment_observables};
use crate::green::{candidate_perturbations, gradient_energy_in_ball, perturb};
use crate::grid::{AveragingMask, CoefficientField, Grid, GridFunction};
use crate::solver::{green_column, CorrectorSolution, Operator, OperatorSpec, SolverSettings};

pub use analysis::*;
pub use plan::{StudyCell, StudyKind, StudyPlan};

const STREAM_AUDIT: u64 = 0x5341_4d50;
const STREAM_PERTURB: u64 = 0x5045_5254;

/// One line of `samples.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub cell: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub sample_index: u64,
    /// Audit key of the realization, derived from the master seed.
    pub seed: u64,
    pub field_hash: u64,
    pub iterations: usize,
    pub residual: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Completed,
    Resumed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "T_values")]
    pub t_values: Vec<f64>,
    #[serde(rename = "R")]
    pub r: f64,
    pub status: CellStatus,
    pub rows: usize,
    pub total_iterations: usize,
    pub max_residual: f64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub kind: StudyKind,
    pub plan: StudyPlan,
    pub cells: Vec<CellRecord>,
    #[serde(skip)]
    pub rows: Vec<SampleRow>,
    pub summary: Summary,
    pub slopes: Vec<SlopeRecord>,
    pub wall_seconds: f64,
}

impl StudyRecord {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }
}

struct Tally {
    iterations: usize,
    residual: f64,
}

impl Tally {
    fn new() -> Self {
        Tally { iterations: 0, residual: 0.0 }
    }

    fn add(&mut self, s: &CorrectorSolution) {
        self.iterations += s.diagnostics.iterations;
        self.residual = self.residual.max(s.diagnostics.relative_residual);
    }
}

struct Setup {
    grid: Grid,
    field: CoefficientField,
    seed: u64,
    hash: u64,
}

fn setup(plan: &StudyPlan, cell: &StudyCell, sample_index: u64) -> Result<Setup> {
    let grid = Grid::centered(plan.ensemble.dimension, cell.r, plan.spacing)?;
    let field = realize_on_grid(&plan.effective_ensemble(), &grid, sample_index)?;
    let hash = field.content_hash();
    Ok(Setup { grid, field, seed: derive_seed(plan.seed, sample_index, STREAM_AUDIT, &[]), hash })
}

/// Corrector and adjoint corrector for the current `T` of the operators.
struct Pair {
    op: Operator,
    adjoint: Option<Operator>,
    share: bool,
}

impl Pair {
    fn new(plan: &StudyPlan, field: &CoefficientField, t: f64) -> Result<Self> {
        let spec = OperatorSpec::new(field, t);
        let op = Operator::new(&spec, plan.solver.face_averaging)?;
        let symmetric = op.is_symmetric();
        let adjoint = if symmetric { None } else { Some(Operator::new(&spec.adjoint(), plan.solver.face_averaging)?) };
        Ok(Pair { op, adjoint, share: symmetric && plan.xi_vector()? == plan.xi_prime_vector()? })
    }

    fn set_massive(&mut self, t: f64) -> Result<()> {
        self.op.set_massive(t)?;
        if let Some(a) = &mut self.adjoint {
            a.set_massive(t)?;
        }
        Ok(())
    }

    fn solve(
        &self,
        plan: &StudyPlan,
        warm: Option<&(CorrectorSolution, CorrectorSolution)>,
        tally: &mut Tally,
    ) -> Result<(CorrectorSolution, CorrectorSolution)> {
        let st = &plan.solver;
        let phi = self.op.solve_corrector(&plan.xi_vector()?, st, warm.map(|w| &w.0.phi))?;
        tally.add(&phi);
        let adj = if self.share {
            phi.clone()
        } else {
            let op = self.adjoint.as_ref().unwrap_or(&self.op);
            let s = op.solve_corrector(&plan.xi_prime_vector()?, st, warm.map(|w| &w.1.phi))?;
            tally.add(&s);
            s
        };
        Ok((phi, adj))
    }
}

fn row(cell: &StudyCell, s: &Setup, t: f64, sample_index: u64, tally: &Tally, values: Vec<f64>) -> SampleRow {
    SampleRow {
        cell: cell.index,
        l: cell.l,
        t,
        r: cell.r,
        sample_index,
        seed: s.seed,
        field_hash: s.hash,
        iterations: tally.iterations,
        residual: tally.residual,
        values,
    }
}

/// Rows produced by one realization of a cell.
pub fn sample_rows(plan: &StudyPlan, kind: StudyKind, cell: &StudyCell, sample_index: u64) -> Result<Vec<SampleRow>> {
    let s = setup(plan, cell, sample_index)?;
    match kind {
        StudyKind::Variance | StudyKind::Systematic => energy_rows(plan, cell, &s, sample_index),
        StudyKind::Gradient => gradient_rows(plan, cell, &s, sample_index),
        StudyKind::Moments => moment_rows(plan, cell, &s, sample_index),
        StudyKind::Sensitivity => sensitivity_rows(plan, cell, &s, sample_index),
    }
}

fn energy_rows(plan: &StudyPlan, cell: &StudyCell, s: &Setup, i: u64) -> Result<Vec<SampleRow>> {
    let mask = AveragingMask::new(&s.grid, cell.l)?;
    let mut pair = Pair::new(plan, &s.field, cell.t_values[0])?;
    let mut out = Vec::new();
    let mut prev = None;
    for &t in &cell.t_values {
        pair.set_massive(t)?;
        let mut tally = Tally::new();
        let sol = pair.solve(plan, prev.as_ref(), &mut tally)?;
        let e = energy_estimate(&pair.op, &sol.0, &sol.1, &mask)?;
        out.push(row(cell, s, t, i, &tally, vec![e.value_with, e.value_without, e.zero_order]));
        prev = Some(sol);
    }
    Ok(out)
}

fn gradient_rows(plan: &StudyPlan, cell: &StudyCell, s: &Setup, i: u64) -> Result<Vec<SampleRow>> {
    let mask = AveragingMask::new(&s.grid, cell.l)?;
    let mut ts = cell.t_values.clone();
    ts.push(2.0 * ts[ts.len() - 1]);
    let sols = corrector_chain(plan, s, &ts)?;
    let mut out = Vec::new();
    for (j, &t) in cell.t_values.iter().enumerate() {
        let (lo, ta) = &sols[j];
        let (hi, tb) = &sols[j + 1];
        let diff: Vec<f64> = hi.phi.values.iter().zip(&lo.phi.values).map(|(a, b)| a - b).collect();
        let diff = GridFunction { grid: s.grid.clone(), values: diff };
        let grad_diff = masked_face_gradient_energy(&diff, &mask)?;
        let phi_diff = mask.average_by(|k| diff.values[k] * diff.values[k]);
        let tally = Tally { iterations: ta.iterations + tb.iterations, residual: ta.residual.max(tb.residual) };
        out.push(row(cell, s, t, i, &tally, vec![grad_diff, phi_diff]));
    }
    Ok(out)
}

/// Correctors for ascending `ts` on one realization, each warm-started
/// from the previous one.
fn corrector_chain(plan: &StudyPlan, s: &Setup, ts: &[f64]) -> Result<Vec<(CorrectorSolution, Tally)>> {
    let xi = plan.xi_vector()?;
    let mut op = Operator::new(&OperatorSpec::new(&s.field, ts[0]), plan.solver.face_averaging)?;
    let mut out: Vec<(CorrectorSolution, Tally)> = Vec::new();
    for &t in ts {
        op.set_massive(t)?;
        let mut tally = Tally::new();
        let phi = op.solve_corrector(&xi, &plan.solver, out.last().map(|p| &p.0.phi))?;
        tally.add(&phi);
        out.push((phi, tally));
    }
    Ok(out)
}

fn moment_rows(plan: &StudyPlan, cell: &StudyCell, s: &Setup, i: u64) -> Result<Vec<SampleRow>> {
    let sols = corrector_chain(plan, s, &cell.t_values)?;
    let mut out = Vec::new();
    for (&t, (phi, tally)) in cell.t_values.iter().zip(&sols) {
        let (phi0, energy) = moment_observables(phi, plan.probe_radius)?;
        out.push(row(cell, s, t, i, tally, vec![phi0, energy]));
    }
    Ok(out)
}

fn sensitivity_rows(plan: &StudyPlan, cell: &StudyCell, s: &Setup, i: u64) -> Result<Vec<SampleRow>> {
    let t = cell.t_values[0];
    let dim = s.grid.dim();
    let xi = plan.xi_vector()?;
    let st: &SolverSettings = &plan.solver;
    let op = Operator::new(&OperatorSpec::new(&s.field, t), st.face_averaging)?;
    let mut tally = Tally::new();
    let phi = op.solve_corrector(&xi, st, None)?;
    tally.add(&phi);
    let xc = s.grid.center_cell();
    let x = s.grid.center(xc);
    let (g, gd) = green_column(&op, s.grid.multi_index(xc), st)?;
    tally.iterations += gd.iterations;
    tally.residual = tally.residual.max(gd.relative_residual);

    let axis = (i as usize) % dim;
    let sign = if (i as usize / dim) % 2 == 0 { 1.0 } else { -1.0 };
    let rho = plan.perturbation_radius;
    let lambda = plan.ensemble.contrast;
    let mut out = Vec::new();
    for (j, &dist) in plan.distances.iter().enumerate() {
        let mut z = x;
        z[axis] += sign * dist;
        let h_t = gradient_energy_in_ball(&g, &z, rho).sqrt();
        let energy = gradient_energy_in_ball(&phi.phi, &z, 3.0 * rho);
        let seed = derive_seed(plan.seed, i, STREAM_PERTURB, &[j as i64]);
        let mut lo = phi.phi.values[xc];
        let mut hi = lo;
        let mut local = Tally { iterations: tally.iterations, residual: tally.residual };
        for p in candidate_perturbations(dim, lambda, plan.random_fills, seed).iter().skip(1) {
            let f = perturb(&s.field, &z, rho, lambda, p);
            let pop = Operator::new(&OperatorSpec::new(&f, t), st.face_averaging)?;
            let sol = pop.solve_corrector(&xi, st, Some(&phi.phi))?;
            local.add(&sol);
            let v = sol.phi.values[xc];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let osc = hi - lo;
        let denom = h_t * (energy + 1.0).sqrt();
        let ratio = if osc == 0.0 { 0.0 } else { osc / denom };
        out.push(row(cell, s, t, i, &local, vec![dist, osc, h_t, energy, ratio]));
    }
    Ok(out)
}

/// Runs every cell not already covered by `resume`, calling `on_cell` with
/// the rows of each completed cell before moving on.
///
/// A failing sample aborts its cell, which is recorded as failed; the
/// study continues with the next cell.
pub fn run_study(
    plan: &StudyPlan,
    kind: StudyKind,
    workers: usize,
    resume: &[SampleRow],
    on_cell: &mut dyn FnMut(&StudyCell, &[SampleRow]) -> Result<()>,
) -> Result<StudyRecord> {
    let start = Instant::now();
    let cells = plan.cells(kind)?;
    output::check_resume(&cells, kind, resume)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;

    let mut records = Vec::new();
    let mut rows: Vec<SampleRow> = Vec::new();
    for cell in &cells {
        let t0 = Instant::now();
        let done: Vec<SampleRow> = resume.iter().filter(|r| r.cell == cell.index).cloned().collect();
        let (status, cell_rows, failure) = if !done.is_empty() {
            (CellStatus::Resumed, done, None)
        } else {
            let results: Vec<Result<Vec<SampleRow>>> = pool.install(|| {
                (0..plan.n_samples as u64).into_par_iter().map(|i| sample_rows(plan, kind, cell, i)).collect()
            });
            match results.into_iter().collect::<Result<Vec<_>>>() {
                Ok(v) => {
                    let v: Vec<SampleRow> = v.into_iter().flatten().collect();
                    on_cell(cell, &v)?;
                    (CellStatus::Completed, v, None)
                }
                Err(e) => (CellStatus::Failed, Vec::new(), Some(e.to_string())),
            }
        };
        records.push(CellRecord {
            index: cell.index,
            l: cell.l,
            t_values: cell.t_values.clone(),
            r: cell.r,
            status,
            rows: cell_rows.len(),
            total_iterations: cell_rows.iter().map(|r| r.iterations).sum(),
            max_residual: cell_rows.iter().map(|r| r.residual).fold(0.0, f64::max),
            wall_seconds: t0.elapsed().as_secs_f64(),
            failure,
        });
        rows.extend(cell_rows);
    }
    let summary = summarize(plan, kind, &rows)?;
    let slopes = summary.slopes();
    Ok(StudyRecord {
        kind,
        plan: plan.clone(),
        cells: records,
        rows,
        summary,
        slopes,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_serial(plan: &StudyPlan, kind: StudyKind) -> Result<StudyRecord> {
    run_study(plan, kind, 1, &[], &mut |_, _| Ok(()))
}

pub fn run_variance_study(plan: &StudyPlan) -> Result<StudyRecord> {
    run_serial(plan, StudyKind::Variance)
}

pub fn run_systematic_study(plan: &StudyPlan) -> Result<StudyRecord> {
    run_serial(plan, StudyKind::Systematic)
}

pub fn run_gradient_convergence_study(plan: &StudyPlan) -> Result<StudyRecord> {
    run_serial(plan, StudyKind::Gradient)
}

pub fn run_moment_study(plan: &StudyPlan) -> Result<StudyRecord> {
    run_serial(plan, StudyKind::Moments)
}

pub fn run_sensitivity_probe(plan: &StudyPlan) -> Result<StudyRecord> {
    run_serial(plan, StudyKind::Sensitivity)
}
