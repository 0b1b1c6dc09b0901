//! Empirical probes of massive Green-function bounds.
//!
//! All probes work on single columns `G_T(·, y)` produced by
//! [`crate::solver::green_column`]: pointwise decay on dyadic annuli
//! `{R < |x − y| ≤ 2R}`, integrated gradient norms with a Meyers-type
//! exponent sweep, ensemble-averaged gradients at fixed points, and the
//! stability of local gradient energy under coefficient perturbations
//! in a ball.
//!
//! The decay rate in `exp(−c r/√T)` is generic, so probes fit a rate
//! rather than assert one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{derive_seed, realize_on_grid, EnsembleSpec, RESOURCE_LIMIT};
use crate::error::{Error, Result};
use crate::grid::{cell_gradient, gradient, CoefficientField, Grid, GridFunction};
use crate::solver::{green_column, Operator, OperatorSpec, SolveDiagnostics, SolverSettings};
use crate::stats::{self, fit_loglog, linear_fit, LogLogFit, Z95};
use crate::tensor::{scaled_identity, Tensor, Vector};

/// A single constant must fit every annulus within this factor.
pub const CONSTANT_SPREAD_LIMIT: f64 = 4.0;

/// Allowed deviation of a fitted gradient exponent from `1 − d`.
pub const EXPONENT_TOLERANCE: f64 = 0.15;

const STREAM_FILLS: u64 = 0x4649_4c4c;

/// `ln(2 + √T/r)` in two dimensions, `r^{2−d}` above, `1` on the line.
pub fn decay_shape(dim: usize, massive: f64, r: f64) -> f64 {
    match dim {
        1 => 1.0,
        2 => (2.0 + massive.sqrt() / r).ln(),
        _ => r.powi(2 - dim as i32),
    }
}

/// Cell where the column peaks, taken as the source location.
pub fn source_cell(g: &GridFunction) -> Result<usize> {
    let (idx, max) = g
        .values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !(max > 0.0) {
        return Err(Error::DegenerateGreen);
    }
    Ok(idx)
}

fn distance(a: &Vector, b: &Vector, dim: usize) -> f64 {
    (0..dim).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Cells with `r < |x − c| ≤ 2r`.
pub fn annulus_cells(grid: &Grid, c: &Vector, r: f64) -> Vec<usize> {
    grid.cells_in_ball(c, 2.0 * r + grid.spacing())
        .into_iter()
        .filter(|&idx| {
            let d = distance(&grid.center(idx), c, grid.dim());
            d > r && d <= 2.0 * r
        })
        .collect()
}

/// Largest ball around `c` that stays in the box.
fn room(grid: &Grid, c: &Vector) -> f64 {
    let dom = grid.domain();
    (0..grid.dim()).map(|i| (c[i] - dom.lower[i]).min(dom.upper[i] - c[i])).fold(f64::INFINITY, f64::min)
}

fn check_radii(grid: &Grid, c: &Vector, radii: &[f64]) -> Result<()> {
    if radii.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::param("radii must be positive"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii must be strictly increasing"));
    }
    let last = *radii.last().unwrap();
    if 2.0 * last > room(grid, c) + 1e-9 {
        return Err(Error::Geometry(format!(
            "annulus of radius {last} does not fit in the box (room {})",
            room(grid, c)
        )));
    }
    Ok(())
}

/// `|∇u|²` per cell from face differences averaged to cell centers.
pub fn cell_gradient_sq(u: &GridFunction) -> Vec<f64> {
    let dim = u.grid.dim();
    cell_gradient(&gradient(u)).iter().map(|v| v[..dim].iter().map(|x| x * x).sum()).collect()
}

/// `∫_{B_r(c)} |∇u|²`.
pub fn gradient_energy_in_ball(u: &GridFunction, c: &Vector, radius: f64) -> f64 {
    let sq = cell_gradient_sq(u);
    ball_sum(&u.grid, &sq, c, radius)
}

fn ball_sum(grid: &Grid, density: &[f64], c: &Vector, radius: f64) -> f64 {
    let vals: Vec<f64> = grid.cells_in_ball(c, radius).into_iter().map(|i| density[i]).collect();
    stats::pairwise_sum(&vals) * grid.cell_volume()
}

/// Smallest value relative to the peak, clipped at zero.
pub fn positivity_defect(g: &GridFunction) -> f64 {
    let max = g.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        (-min).max(0.0) / max
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseDecay {
    #[serde(rename = "T")]
    pub massive: f64,
    pub radii: Vec<f64>,
    pub max_per_annulus: Vec<f64>,
    pub shape: Vec<f64>,
    /// Fitted `ĉ/√T`, per unit length.
    pub rate: f64,
    pub rate_std_error: f64,
    /// `max G / (shape · exp(−rate·r))` per annulus.
    pub constants: Vec<f64>,
    pub constant_spread: f64,
    pub passed: bool,
}

/// Per-annulus maxima of `G` and a fit of `ln(max G / shape(r))` against
/// the inner radius.
pub fn pointwise_decay_probe(g: &GridFunction, massive: f64, radii: &[f64]) -> Result<PointwiseDecay> {
    if !(massive > 0.0) {
        return Err(Error::param("T must be positive"));
    }
    if radii.len() < 4 {
        return Err(Error::InsufficientData(format!("need at least 4 annuli, got {}", radii.len())));
    }
    let grid = &g.grid;
    let src = grid.center(source_cell(g)?);
    check_radii(grid, &src, radii)?;
    let dim = grid.dim();
    let mut maxima = Vec::with_capacity(radii.len());
    for &r in radii {
        let cells = annulus_cells(grid, &src, r);
        if cells.is_empty() {
            return Err(Error::Geometry(format!("annulus at R = {r} contains no cells")));
        }
        let m = cells.iter().map(|&i| g.values[i]).fold(f64::NEG_INFINITY, f64::max);
        if !(m > 0.0) {
            return Err(Error::DegenerateGreen);
        }
        maxima.push(m);
    }
    let shape: Vec<f64> = radii.iter().map(|&r| decay_shape(dim, massive, r)).collect();
    let y: Vec<f64> = maxima.iter().zip(&shape).map(|(m, s)| (m / s).ln()).collect();
    let fit = linear_fit(radii, &y, None)?;
    let rate = -fit.slope;
    let constants: Vec<f64> =
        maxima.iter().zip(&shape).zip(radii).map(|((m, s), r)| m / (s * (-rate * r).exp())).collect();
    let cmax = constants.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cmin = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = cmax / cmin;
    Ok(PointwiseDecay {
        massive,
        radii: radii.to_vec(),
        max_per_annulus: maxima,
        shape,
        rate,
        rate_std_error: fit.slope_std_error,
        constants,
        constant_spread: spread,
        passed: rate > 0.0 && spread <= CONSTANT_SPREAD_LIMIT,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusNorm {
    #[serde(rename = "R")]
    pub radius: f64,
    pub p: f64,
    /// `(R^{−d} Σ |∇G|^{2p} hᵈ)^{1/2p}`
    pub norm: f64,
    /// Same sum normalized by the annulus volume, a true power mean.
    pub power_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub p: f64,
    pub exponent: f64,
    pub std_error: f64,
    pub ci: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusGradientTable {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub p_sweep: Vec<f64>,
    pub rows: Vec<AnnulusNorm>,
    pub fits: Vec<ExponentFit>,
    /// Power means nondecreasing in `p` on every annulus.
    pub monotone_in_p: bool,
    /// Largest `p` whose exponent stays within [`EXPONENT_TOLERANCE`] of `1 − d`.
    pub largest_p_retaining_exponent: Option<f64>,
}

impl AnnulusGradientTable {
    pub const CSV_HEADER: &'static str = "R,p,norm,fit_exponent,ci";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for row in &self.rows {
            let fit = self.fits.iter().find(|f| f.p == row.p);
            let (e, ci) = fit.map(|f| (f.exponent, f.ci)).unwrap_or((f64::NAN, f64::NAN));
            s.push_str(&format!("{},{},{:.12e},{:.6},{:.6}\n", row.radius, row.p, row.norm, e, ci));
        }
        s
    }

    pub fn fit_for(&self, p: f64) -> Option<&ExponentFit> {
        self.fits.iter().find(|f| f.p == p)
    }

    pub fn norms_for(&self, p: f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.p == p).map(|r| r.norm).collect()
    }
}

/// Annulus `L^{2p}` gradient norms for every `(R, p)` and a log-log
/// exponent fit per `p`.
pub fn annulus_gradient_norms(g: &GridFunction, radii: &[f64], p_sweep: &[f64]) -> Result<AnnulusGradientTable> {
    if radii.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 annuli, got {}", radii.len())));
    }
    if p_sweep.is_empty() || p_sweep.iter().any(|&p| !(1.0..=2.0).contains(&p)) {
        return Err(Error::param("p sweep must be a nonempty subset of [1, 2]"));
    }
    let mut ps = p_sweep.to_vec();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let grid = &g.grid;
    let dim = grid.dim();
    let src = grid.center(source_cell(g)?);
    check_radii(grid, &src, radii)?;
    let sq = cell_gradient_sq(g);
    let vol = grid.cell_volume();

    let mut rows = Vec::new();
    let mut monotone = true;
    for &r in radii {
        let cells = annulus_cells(grid, &src, r);
        if cells.is_empty() {
            return Err(Error::Geometry(format!("annulus at R = {r} contains no cells")));
        }
        let mut prev = 0.0;
        for &p in &ps {
            let terms: Vec<f64> = cells.iter().map(|&i| sq[i].powf(p)).collect();
            let sum = stats::pairwise_sum(&terms);
            let norm = (r.powi(-(dim as i32)) * sum * vol).powf(0.5 / p);
            let power_mean = (sum / cells.len() as f64).powf(0.5 / p);
            if power_mean < prev * (1.0 - 1e-12) {
                monotone = false;
            }
            prev = power_mean;
            rows.push(AnnulusNorm { radius: r, p, norm, power_mean });
        }
    }

    let target = 1.0 - dim as f64;
    let mut fits = Vec::new();
    for &p in &ps {
        let pts: Vec<(f64, f64, f64)> =
            rows.iter().filter(|row| row.p == p).map(|row| (row.radius, row.norm, 0.0)).collect();
        if pts.iter().any(|pt| !(pt.1 > 0.0)) {
            return Err(Error::DegenerateGreen);
        }
        let f = fit_loglog(&pts)?;
        fits.push(ExponentFit { p, exponent: f.slope, std_error: f.std_error, ci: Z95 * f.std_error, r_squared: f.r_squared });
    }
    let largest = fits.iter().filter(|f| (f.exponent - target).abs() <= EXPONENT_TOLERANCE).map(|f| f.p).fold(None, |a: Option<f64>, p| Some(a.map_or(p, |a| a.max(p))));

    Ok(AnnulusGradientTable {
        dim,
        radii: radii.to_vec(),
        p_sweep: ps,
        rows,
        fits,
        monotone_in_p: monotone,
        largest_p_retaining_exponent: largest,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassFlags {
    pub decay: bool,
    pub gradient_exponent: bool,
    pub monotone_in_p: bool,
    pub positivity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenProbeReport {
    #[serde(rename = "T")]
    pub massive: f64,
    pub dim: usize,
    pub spacing: f64,
    pub radii: Vec<f64>,
    pub pointwise: PointwiseDecay,
    pub gradients: AnnulusGradientTable,
    pub positivity_defect: f64,
    pub diagnostics: SolveDiagnostics,
    pub pass_flags: PassFlags,
}

/// Solves the column at the box center of `field` and runs the pointwise
/// and annulus gradient probes on it.
pub fn green_probe(
    field: &CoefficientField,
    massive: f64,
    radii: &[f64],
    p_sweep: &[f64],
    settings: &SolverSettings,
) -> Result<GreenProbeReport> {
    let op = Operator::new(&OperatorSpec::new(field, massive), settings.face_averaging)?;
    let grid = &field.grid;
    let (g, diagnostics) = green_column(&op, grid.multi_index(grid.center_cell()), settings)?;
    let pointwise = pointwise_decay_probe(&g, massive, radii)?;
    let gradients = annulus_gradient_norms(&g, radii, p_sweep)?;
    let defect = positivity_defect(&g);
    let target = 1.0 - grid.dim() as f64;
    let exponent_ok = gradients.fit_for(1.0).is_some_and(|f| (f.exponent - target).abs() <= EXPONENT_TOLERANCE);
    let pass_flags = PassFlags {
        decay: pointwise.passed,
        gradient_exponent: exponent_ok,
        monotone_in_p: gradients.monotone_in_p,
        positivity: defect <= 10.0 * settings.tol,
    };
    Ok(GreenProbeReport {
        massive,
        dim: grid.dim(),
        spacing: grid.spacing(),
        radii: radii.to_vec(),
        pointwise,
        gradients,
        positivity_defect: defect,
        diagnostics,
        pass_flags,
    })
}

/// Parameters of the ensemble-averaged gradient probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealedProbe {
    #[serde(rename = "T")]
    pub massive: f64,
    pub n_samples: usize,
    pub radii: Vec<f64>,
    pub spacing: f64,
    /// Half-width of the box around the source.
    pub box_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedRow {
    #[serde(rename = "R")]
    pub radius: f64,
    /// Distance of the probe points from the source.
    pub distance: f64,
    pub mean_sq: f64,
    pub ci_mean_sq: f64,
    pub rms: f64,
    pub ci_rms: f64,
}

/// Least-squares fit of `ln y = a + β ln r − c r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub rate: f64,
    #[serde(default)]
    pub exponent_ci: f64,
    #[serde(default)]
    pub rate_ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealedReport {
    #[serde(rename = "T")]
    pub massive: f64,
    pub n_samples: usize,
    pub rows: Vec<AnnealedRow>,
    /// Plain power law through the probe points.
    pub fit: LogLogFit,
    pub exponent_ci: f64,
    /// Power law times exponential, with delete-one jackknife intervals.
    pub tail: Option<TailFit>,
}

/// `⟨|∇G(y, 0)|²⟩^{1/2}` at the `2d` axis points at distance `1.5R`
/// from the source, for each `R`.
pub fn annealed_gradient_probe(
    spec: &EnsembleSpec,
    probe: &AnnealedProbe,
    settings: &SolverSettings,
) -> Result<AnnealedReport> {
    spec.validate()?;
    if probe.n_samples < 50 {
        return Err(Error::param(format!("annealed probe needs at least 50 samples, got {}", probe.n_samples)));
    }
    if !(probe.massive > 0.0) {
        return Err(Error::param("T must be positive"));
    }
    if probe.radii.len() < 3 {
        return Err(Error::InsufficientData("need at least 3 radii".into()));
    }
    let grid = Grid::centered(spec.dimension, probe.box_radius, probe.spacing)?;
    if probe.n_samples as f64 * grid.len() as f64 > RESOURCE_LIMIT {
        return Err(Error::ResourceGuard(format!(
            "{} samples on {} cells exceeds the sampling budget",
            probe.n_samples,
            grid.len()
        )));
    }
    let dim = grid.dim();
    let center = grid.multi_index(grid.center_cell());
    let src = grid.center(grid.center_cell());
    check_radii(&grid, &src, &probe.radii.iter().map(|r| 0.75 * r).collect::<Vec<_>>())?;
    let h = grid.spacing();

    // Probe cells per radius: 2d axis points at the snapped mid-radius.
    let mut points = Vec::new();
    let mut distances = Vec::new();
    for &r in &probe.radii {
        let steps = (1.5 * r / h).round() as usize;
        if steps == 0 {
            return Err(Error::Geometry(format!("radius {r} is below the grid resolution")));
        }
        distances.push(steps as f64 * h);
        let mut cells = Vec::new();
        for axis in 0..dim {
            let mut up = center;
            up[axis] += steps;
            let mut down = center;
            down[axis] -= steps;
            cells.push(grid.index(up));
            cells.push(grid.index(down));
        }
        points.push(cells);
    }

    let per_sample: Vec<Vec<f64>> = (0..probe.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let field = realize_on_grid(spec, &grid, i)?;
            let op = Operator::new(&OperatorSpec::new(&field, probe.massive), settings.face_averaging)?;
            let (g, _) = green_column(&op, center, settings)?;
            let sq = cell_gradient_sq(&g);
            Ok(points.iter().map(|cells| cells.iter().map(|&c| sq[c]).sum::<f64>() / cells.len() as f64).collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (j, &r) in probe.radii.iter().enumerate() {
        let v: Vec<f64> = per_sample.iter().map(|s| s[j]).collect();
        let m = stats::mean(&v);
        let se = (stats::variance(&v) / v.len() as f64).sqrt();
        let ci = Z95 * se;
        let rms = m.sqrt();
        rows.push(AnnealedRow { radius: r, distance: distances[j], mean_sq: m, ci_mean_sq: ci, rms, ci_rms: ci / (2.0 * rms) });
    }
    if rows.iter().any(|r| !(r.rms > 0.0)) {
        return Err(Error::DegenerateGreen);
    }
    let fit = fit_loglog(&rows.iter().map(|r| (r.distance, r.rms, r.ci_rms)).collect::<Vec<_>>())?;
    let tail = if rows.len() >= 4 { tail_with_jackknife(&distances, &per_sample) } else { None };
    Ok(AnnealedReport { massive: probe.massive, n_samples: probe.n_samples, exponent_ci: Z95 * fit.std_error, fit, rows, tail })
}

fn tail_of_means(r: &[f64], samples: &[&Vec<f64>]) -> Option<TailFit> {
    let y: Vec<f64> = (0..r.len())
        .map(|j| {
            let v: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            0.5 * stats::mean(&v).ln()
        })
        .collect();
    fit_power_exponential(r, &y)
}

fn tail_with_jackknife(r: &[f64], per_sample: &[Vec<f64>]) -> Option<TailFit> {
    let all: Vec<&Vec<f64>> = per_sample.iter().collect();
    let mut full = tail_of_means(r, &all)?;
    let n = per_sample.len();
    let mut exps = Vec::with_capacity(n);
    let mut rates = Vec::with_capacity(n);
    for i in 0..n {
        let rest: Vec<&Vec<f64>> = per_sample.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, s)| s).collect();
        let f = tail_of_means(r, &rest)?;
        exps.push(f.exponent);
        rates.push(f.rate);
    }
    let jk = |v: &[f64]| {
        let m = stats::mean(v);
        Z95 * ((n as f64 - 1.0) / n as f64 * v.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt()
    };
    full.exponent_ci = jk(&exps);
    full.rate_ci = jk(&rates);
    Some(full)
}

/// Least squares for `y = a + β ln r − c r`; `None` if the normal
/// equations are singular.
pub fn fit_power_exponential(r: &[f64], y: &[f64]) -> Option<TailFit> {
    let rows: Vec<[f64; 3]> = r.iter().map(|&r| [1.0, r.ln(), -r]).collect();
    let mut m = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (row, &yv) in rows.iter().zip(y) {
        for i in 0..3 {
            b[i] += row[i] * yv;
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max).powi(3);
    if !(d.abs() > 1e-12 * scale) {
        return None;
    }
    let solve = |col: usize| {
        let mut mc = m;
        for i in 0..3 {
            mc[i][col] = b[i];
        }
        det(&mc) / d
    };
    Some(TailFit { exponent: solve(1), rate: solve(2), exponent_ci: 0.0, rate_ci: 0.0 })
}

/// Replacement applied to the cells of a ball.
#[derive(Clone, Debug, PartialEq)]
pub enum Perturbation {
    None,
    Uniform(Tensor),
    /// Each cell independently `λ·Id` or `Id` with probability ½.
    RandomFill { seed: u64 },
}

/// Copy of `field` with the cells whose centers lie in `B_radius(center)`
/// replaced according to `perturbation`.
pub fn perturb(field: &CoefficientField, center: &Vector, radius: f64, contrast: f64, perturbation: &Perturbation) -> CoefficientField {
    let mut out = field.clone();
    let dim = field.dim();
    let cells = field.grid.cells_in_ball(center, radius);
    match perturbation {
        Perturbation::None => {}
        Perturbation::Uniform(a) => {
            for i in cells {
                out.cells[i] = *a;
            }
        }
        Perturbation::RandomFill { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for i in cells {
                let s = if rng.random_bool(0.5) { contrast } else { 1.0 };
                out.cells[i] = scaled_identity(dim, s);
            }
        }
    }
    out
}

/// The unperturbed field, the two extreme constants and `fills` random fills.
pub fn candidate_perturbations(dim: usize, contrast: f64, fills: usize, seed: u64) -> Vec<Perturbation> {
    let mut out = vec![
        Perturbation::None,
        Perturbation::Uniform(scaled_identity(dim, contrast)),
        Perturbation::Uniform(scaled_identity(dim, 1.0)),
    ];
    out.extend((0..fills as u64).map(|k| Perturbation::RandomFill { seed: derive_seed(seed, k, STREAM_FILLS, &[]) }));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationProbe {
    pub center: Vector,
    pub radius: f64,
    #[serde(rename = "T")]
    pub massive: f64,
    pub contrast: f64,
    #[serde(default = "default_fills")]
    pub random_fills: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_fills() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationEntry {
    pub source: [usize; 3],
    pub distance: f64,
    /// `∫_B |∇G|²` for the unperturbed field.
    pub base: f64,
    /// Same integral for each candidate, in candidate order.
    pub perturbed: Vec<f64>,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub radius: f64,
    #[serde(rename = "T")]
    pub massive: f64,
    pub candidates: usize,
    pub entries: Vec<OscillationEntry>,
    pub max_ratio: f64,
}

/// `max_Ã ∫_B |∇G(·, x; Ã)|² / ∫_B |∇G(·, x; A)|²` over the candidate
/// perturbations `Ã` of `A` in the ball `B`, for every source cell `x`.
pub fn green_oscillation_probe(
    field: &CoefficientField,
    sources: &[[usize; 3]],
    probe: &OscillationProbe,
    settings: &SolverSettings,
) -> Result<OscillationReport> {
    if !(probe.radius > 0.0) || !(probe.contrast > 0.0 && probe.contrast <= 1.0) {
        return Err(Error::param("ball radius must be positive and contrast in (0, 1]"));
    }
    if sources.is_empty() {
        return Err(Error::InsufficientData("no source points".into()));
    }
    let grid = &field.grid;
    let dim = grid.dim();
    let mut distances = Vec::new();
    for s in sources {
        let x = grid.center(grid.index(*s));
        let d = distance(&x, &probe.center, dim);
        if d <= probe.radius {
            return Err(Error::Geometry(format!("source {s:?} lies within the perturbation ball")));
        }
        distances.push(d);
    }
    let candidates = candidate_perturbations(dim, probe.contrast, probe.random_fills, probe.seed);
    let energies: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|p| {
            let f = perturb(field, &probe.center, probe.radius, probe.contrast, p);
            let op = Operator::new(&OperatorSpec::new(&f, probe.massive), settings.face_averaging)?;
            sources
                .iter()
                .map(|s| {
                    let (g, _) = green_column(&op, *s, settings)?;
                    Ok(gradient_energy_in_ball(&g, &probe.center, probe.radius))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::new();
    for (j, s) in sources.iter().enumerate() {
        let base = energies[0][j];
        if !(base > 0.0) {
            return Err(Error::DegenerateGreen);
        }
        let perturbed: Vec<f64> = energies.iter().map(|e| e[j]).collect();
        let ratio = perturbed.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / base;
        entries.push(OscillationEntry { source: *s, distance: distances[j], base, perturbed, ratio });
    }
    let max_ratio = entries.iter().map(|e| e.ratio).fold(f64::NEG_INFINITY, f64::max);
    Ok(OscillationReport { radius: probe.radius, massive: probe.massive, candidates: candidates.len(), entries, max_ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDecay {
    pub distances: Vec<f64>,
    pub ball_norms: Vec<f64>,
    pub fit: LogLogFit,
    /// Exponent negative with its whole 95% interval.
    pub passed: bool,
}

/// Local `L²` norm of `∇G` on balls `B_ρ(z)`, averaged over the `2d` axis
/// points `z` at each distance, fitted against the distance.
pub fn local_gradient_decay(g: &GridFunction, distances: &[f64], ball_radius: f64) -> Result<LocalDecay> {
    let grid = &g.grid;
    let dim = grid.dim();
    let src = grid.center(source_cell(g)?);
    let room = room(grid, &src);
    if distances.iter().any(|&r| r + ball_radius > room || r <= ball_radius) {
        return Err(Error::Geometry("probe balls must stay inside the box and away from the source".into()));
    }
    let sq = cell_gradient_sq(g);
    let mut norms = Vec::new();
    for &r in distances {
        let mut acc = 0.0;
        for axis in 0..dim {
            for sign in [-1.0, 1.0] {
                let mut z = src;
                z[axis] += sign * r;
                acc += ball_sum(grid, &sq, &z, ball_radius).sqrt();
            }
        }
        norms.push(acc / (2 * dim) as f64);
    }
    if norms.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::DegenerateGreen);
    }
    let fit = fit_loglog(&distances.iter().zip(&norms).map(|(&d, &n)| (d, n, 0.0)).collect::<Vec<_>>())?;
    let passed = fit.slope + Z95 * fit.std_error < 0.0;
    Ok(LocalDecay { distances: distances.to_vec(), ball_norms: norms, fit, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::identity;
    use proptest::prelude::*;

    fn id_column(dim: usize, radius: f64, h: f64, t: f64) -> GridFunction {
        let grid = Grid::centered(dim, radius, h).unwrap();
        let field = CoefficientField::constant(&grid, identity(dim));
        let op = Operator::new(&OperatorSpec::new(&field, t), Default::default()).unwrap();
        green_column(&op, grid.multi_index(grid.center_cell()), &SolverSettings::with_tol(1e-10)).unwrap().0
    }

    /// `K₀(x) = ∫₀^∞ exp(−x cosh t) dt`
    fn bessel_k0(x: f64) -> f64 {
        let n = 20000;
        let top = (2.0 * (40.0 / x).ln().max(1.0)).max(5.0);
        let dt = top / n as f64;
        (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * (-x * t.cosh()).exp()
            })
            .sum::<f64>()
            * dt
    }

    #[test]
    fn zero_column_is_degenerate() {
        let grid = Grid::centered(2, 16.0, 0.5).unwrap();
        let g = GridFunction::zeros(&grid);
        assert!(matches!(pointwise_decay_probe(&g, 64.0, &[1.0, 2.0, 3.0, 4.0]), Err(Error::DegenerateGreen)));
        assert!(matches!(annulus_gradient_norms(&g, &[1.0, 2.0, 4.0], &[1.0]), Err(Error::DegenerateGreen)));
    }

    #[test]
    fn guards() {
        let g = id_column(2, 8.0, 0.5, 16.0);
        assert!(matches!(pointwise_decay_probe(&g, 16.0, &[1.0, 2.0, 3.0]), Err(Error::InsufficientData(_))));
        assert!(matches!(pointwise_decay_probe(&g, 16.0, &[1.0, 2.0, 3.0, 5.0]), Err(Error::Geometry(_))));
        assert!(pointwise_decay_probe(&g, 16.0, &[1.0, 3.0, 2.0, 4.0]).is_err());
        assert!(annulus_gradient_norms(&g, &[1.0, 2.0, 4.0], &[0.5]).is_err());
        assert!(annulus_gradient_norms(&g, &[1.0, 2.0, 4.0], &[2.5]).is_err());
    }

    #[test]
    fn decay_rate_matches_continuum_kernel_fit() {
        let t = 64.0;
        let radii = [4.0, 8.0, 12.0, 16.0];
        let g = id_column(2, 32.0, 0.5, t);
        let probe = pointwise_decay_probe(&g, t, &radii).unwrap();
        assert!(probe.passed, "{probe:?}");

        // Same fit on the whole-space kernel K₀(r/√T)/2π at the first
        // lattice distance beyond each inner radius.
        let h = 1.0 / 64.0;
        let y: Vec<f64> = radii
            .iter()
            .map(|&r| {
                let rr = ((r / h).floor() + 1.0) * h;
                (bessel_k0(rr / t.sqrt()) / (2.0 * std::f64::consts::PI) / decay_shape(2, t, r)).ln()
            })
            .collect();
        let reference = -linear_fit(&radii, &y, None).unwrap().slope;
        let ratio = probe.rate / reference;
        assert!((0.5..=2.0).contains(&ratio), "rate {} reference {reference}", probe.rate);
    }

    #[test]
    fn p_one_is_plain_annulus_average() {
        let g = id_column(2, 16.0, 0.5, 32.0);
        let radii = [1.0, 2.0, 4.0, 8.0];
        let table = annulus_gradient_norms(&g, &radii, &[1.0, 1.5, 2.0]).unwrap();
        let grad = cell_gradient(&gradient(&g));
        let src = g.grid.center(g.grid.center_cell());
        for &r in &radii {
            let mut acc = 0.0;
            for idx in 0..g.grid.len() {
                let d = distance(&g.grid.center(idx), &src, 2);
                if d > r && d <= 2.0 * r {
                    acc += grad[idx][0].powi(2) + grad[idx][1].powi(2);
                }
            }
            let plain = (acc * 0.25 / (r * r)).sqrt();
            let row = table.rows.iter().find(|row| row.radius == r && row.p == 1.0).unwrap();
            assert!((row.norm - plain).abs() <= 1e-12 * plain);
        }
        assert!(table.monotone_in_p);
    }

    #[test]
    fn annulus_norms_decrease_on_constant_field() {
        let g = id_column(2, 32.0, 0.5, 1e4);
        let table = annulus_gradient_norms(&g, &[2.0, 4.0, 8.0, 16.0], &[1.0]).unwrap();
        let n = table.norms_for(1.0);
        assert!(n.windows(2).all(|w| w[1] < w[0]), "{n:?}");
        let csv = table.to_csv();
        assert!(csv.starts_with(AnnulusGradientTable::CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn random_fill_only_touches_the_ball() {
        let grid = Grid::centered(2, 8.0, 0.5).unwrap();
        let field = CoefficientField::constant(&grid, identity(2));
        let c = [2.0, 0.0, 0.0];
        let f = perturb(&field, &c, 1.5, 0.25, &Perturbation::RandomFill { seed: 3 });
        let inside = grid.cells_in_ball(&c, 1.5);
        for i in 0..grid.len() {
            if !inside.contains(&i) {
                assert_eq!(f.cells[i], field.cells[i]);
            }
        }
        assert!(inside.iter().any(|&i| f.cells[i][0][0] == 0.25));
        assert_eq!(f, perturb(&field, &c, 1.5, 0.25, &Perturbation::RandomFill { seed: 3 }));
    }

    #[test]
    fn oscillation_probe_on_constant_field() {
        let grid = Grid::centered(2, 16.0, 0.5).unwrap();
        let field = CoefficientField::constant(&grid, identity(2));
        let c = grid.multi_index(grid.center_cell());
        let probe = OscillationProbe { center: grid.center(grid.center_cell()), radius: 1.0, massive: 16.0, contrast: 0.25, random_fills: 6, seed: 1 };
        let x = [c[0] + 16, c[1], 0];
        let report = green_oscillation_probe(&field, &[x], &probe, &SolverSettings::default()).unwrap();
        assert_eq!(report.candidates, 9);
        let e = &report.entries[0];
        assert_eq!(e.perturbed[0], e.base);
        assert!(e.ratio >= 1.0 && e.ratio <= 25.0, "{}", e.ratio);

        let near = [c[0] + 1, c[1], 0];
        assert!(matches!(green_oscillation_probe(&field, &[near], &probe, &SolverSettings::default()), Err(Error::Geometry(_))));
    }

    #[test]
    fn local_decay_is_negative_on_constant_field() {
        let g = id_column(2, 32.0, 0.5, 256.0);
        let d = local_gradient_decay(&g, &[3.0, 6.0, 12.0, 24.0], 1.0).unwrap();
        assert!(d.passed, "{:?}", d.fit);
    }

    #[test]
    fn tail_fit_recovers_construction() {
        let r = [1.0, 2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = r.iter().map(|&r: &f64| 0.3 - 1.0 * r.ln() - 0.125 * r).collect();
        let f = fit_power_exponential(&r, &y).unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-9 && (f.rate - 0.125).abs() < 1e-9);
        assert!(fit_power_exponential(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn annealed_probe_guards() {
        let spec = EnsembleSpec::constant(2, &identity(2));
        let probe = AnnealedProbe { massive: 16.0, n_samples: 10, radii: vec![1.0, 2.0, 4.0], spacing: 0.5, box_radius: 16.0 };
        assert!(annealed_gradient_probe(&spec, &probe, &SolverSettings::default()).is_err());
        let big = AnnealedProbe { n_samples: 100_000, box_radius: 100.0, spacing: 0.05, ..probe };
        assert!(matches!(annealed_gradient_probe(&spec, &big, &SolverSettings::default()), Err(Error::ResourceGuard(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn power_means_are_monotone(vals in proptest::collection::vec(0.0f64..1.0, 33 * 33)) {
            let grid = Grid::centered(2, 8.0, 0.5).unwrap();
            let mut v = vals;
            v[grid.center_cell()] = 2.0;
            let g = GridFunction::from_values(&grid, v).unwrap();
            let t = annulus_gradient_norms(&g, &[1.0, 2.0, 4.0], &[1.0, 1.25, 1.5, 2.0]).unwrap();
            prop_assert!(t.monotone_in_p);
        }
    }
}
