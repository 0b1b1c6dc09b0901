//! Exact spectral-gap checks on small ensembles whose configurations can
//! be enumerated.
//!
//! An [`EnumerableEnsemble`] is a base field plus a few sites, each a set
//! of cells resampled independently from a finite law. Expectations are
//! sums over all configurations with their exact weights. The oscillation
//! `osc_{A|U} X` is the range of `X` over the configurations that agree
//! with `A` outside `U`; measurability questions do not arise for finite
//! ensembles.
//!
//! The continuum integral over ball centers becomes a sum over the site
//! lattice times the lattice cell volume.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{realize_on_grid, EnsembleSpec};
use crate::error::{Error, Result};
use crate::estimator::energy_estimate;
use crate::grid::{AveragingMask, BoxDomain, CoefficientField, Grid};
use crate::solver::{Operator, OperatorSpec, SolverSettings};
use crate::stats::{self, fit_loglog, LogLogFit, Z95};
use crate::tensor::{scaled_identity, Tensor, Vector};

/// Largest number of configurations enumerated.
pub const MAX_CONFIGURATIONS: usize = 1 << 16;

/// Relative slack for floating-point rounding in the comparisons.
const ROUNDING: f64 = 1e-12;

/// Perturbable block of cells at a lattice position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub position: Vector,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumerableEnsemble {
    pub name: String,
    pub base_field: CoefficientField,
    pub sites: Vec<Site>,
    /// Common single-site law: values and their probabilities.
    pub values: Vec<Tensor>,
    pub probabilities: Vec<f64>,
    /// Sites sit on `origin + spacing·ℤᵈ`.
    pub lattice_origin: Vector,
    pub lattice_spacing: f64,
}

impl EnumerableEnsemble {
    pub fn validate(&self) -> Result<()> {
        let m = self.values.len();
        if m == 0 || m > 3 {
            return Err(Error::param(format!("each site takes 1 to 3 values, got {m}")));
        }
        if self.probabilities.len() != m || self.probabilities.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::param("one positive probability per site value"));
        }
        if (self.probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::param("site probabilities must sum to 1"));
        }
        if self.sites.is_empty() {
            return Err(Error::param("ensemble has no sites"));
        }
        if !(self.lattice_spacing > 0.0) {
            return Err(Error::param("lattice spacing must be positive"));
        }
        self.configuration_count()?;
        let n = self.base_field.grid.len();
        let mut seen = BTreeSet::new();
        let dim = self.base_field.dim();
        for s in &self.sites {
            if s.cells.is_empty() || s.cells.iter().any(|&c| c >= n || !seen.insert(c)) {
                return Err(Error::param("site cells must be nonempty, in range and disjoint"));
            }
            for i in 0..dim {
                let k = (s.position[i] - self.lattice_origin[i]) / self.lattice_spacing;
                if (k - k.round()).abs() > 1e-9 {
                    return Err(Error::param(format!("site at {:?} is off the lattice", &s.position[..dim])));
                }
            }
        }
        for (i, v) in self.values.iter().enumerate() {
            crate::tensor::check_admissible(dim, v, 1e-12)
                .map_err(|e| Error::param(format!("site value {i} is not admissible: {e}")))?;
        }
        Ok(())
    }

    /// `|values|^|sites|`, guarded by [`MAX_CONFIGURATIONS`].
    pub fn configuration_count(&self) -> Result<usize> {
        let m = self.values.len() as f64;
        let count = m.powi(self.sites.len() as i32);
        if count > MAX_CONFIGURATIONS as f64 {
            return Err(Error::ResourceGuard(format!(
                "{count} configurations exceed the enumeration limit {MAX_CONFIGURATIONS}"
            )));
        }
        Ok(count as usize)
    }

    /// Digits of configuration `c` in base `|values|`, site 0 least significant.
    pub fn digits(&self, c: usize) -> Vec<usize> {
        let m = self.values.len();
        let mut c = c;
        (0..self.sites.len())
            .map(|_| {
                let d = c % m;
                c /= m;
                d
            })
            .collect()
    }

    pub fn probability(&self, c: usize) -> f64 {
        self.digits(c).iter().map(|&d| self.probabilities[d]).product()
    }

    pub fn field(&self, c: usize) -> CoefficientField {
        let mut f = self.base_field.clone();
        for (site, d) in self.sites.iter().zip(self.digits(c)) {
            for &cell in &site.cells {
                f.cells[cell] = self.values[d];
            }
        }
        f
    }

    /// Lattice cell volume `spacingᵈ`.
    pub fn lattice_volume(&self) -> f64 {
        self.lattice_spacing.powi(self.base_field.dim() as i32)
    }

    /// Lattice points whose open `radius`-ball contains at least one site.
    pub fn ball_centers(&self, radius: f64) -> Vec<Vector> {
        let dim = self.base_field.dim();
        let s = self.lattice_spacing;
        let reach = (radius / s).ceil() as i64;
        let mut set = BTreeSet::new();
        for site in &self.sites {
            let mut base = [0i64; 3];
            for i in 0..dim {
                base[i] = ((site.position[i] - self.lattice_origin[i]) / s).round() as i64;
            }
            let span = |i: usize| if i < dim { -reach..=reach } else { 0..=0 };
            for a in span(0) {
                for b in span(1) {
                    for c in span(2) {
                        let k = [base[0] + a, base[1] + b, base[2] + c];
                        let d2: f64 = (0..dim).map(|i| ((k[i] - base[i]) as f64 * s).powi(2)).sum();
                        if d2 < radius * radius {
                            set.insert(k);
                        }
                    }
                }
            }
        }
        set.into_iter()
            .map(|k| {
                let mut z = [0.0; 3];
                for i in 0..dim {
                    z[i] = self.lattice_origin[i] + k[i] as f64 * s;
                }
                z
            })
            .collect()
    }

    fn sites_in_ball(&self, z: &Vector, radius: f64) -> Vec<usize> {
        let dim = self.base_field.dim();
        self.sites
            .iter()
            .enumerate()
            .filter(|(_, s)| (0..dim).map(|i| (s.position[i] - z[i]).powi(2)).sum::<f64>() < radius * radius)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Functional of the coefficient field.
pub type Functional<'a> = dyn Fn(&CoefficientField) -> Result<f64> + Sync + 'a;

/// Values of `X` and weights of every configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

pub fn enumerate(ens: &EnumerableEnsemble, x: &Functional) -> Result<Enumeration> {
    ens.validate()?;
    let n = ens.configuration_count()?;
    let values = (0..n).into_par_iter().map(|c| x(&ens.field(c))).collect::<Result<Vec<f64>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("functional returned a non-finite value"));
    }
    let probabilities = (0..n).map(|c| ens.probability(c)).collect();
    Ok(Enumeration { values, probabilities })
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn expectation(p: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let terms: Vec<f64> = (0..p.len()).map(|c| p[c] * f(c)).collect();
    stats::pairwise_sum(&terms)
}

fn centered_moment(e: &Enumeration, power: i32) -> f64 {
    if is_constant(&e.values) {
        return 0.0;
    }
    let m = expectation(&e.probabilities, |c| e.values[c]);
    expectation(&e.probabilities, |c| (e.values[c] - m).powi(power))
}

/// `Var X` by full enumeration.
pub fn exact_variance(ens: &EnumerableEnsemble, x: &Functional) -> Result<f64> {
    Ok(centered_moment(&enumerate(ens, x)?, 2))
}

/// Per-configuration `Σ_z (osc_{A|B_radius(z)} X)² · volume`.
fn oscillation_field(ens: &EnumerableEnsemble, e: &Enumeration, radius: f64) -> Vec<f64> {
    let n = e.values.len();
    let m = ens.values.len();
    let mut out = vec![0.0; n];
    if is_constant(&e.values) {
        return out;
    }
    let pow: Vec<usize> = (0..ens.sites.len()).map(|k| m.pow(k as u32)).collect();
    for z in ens.ball_centers(radius) {
        let inside = ens.sites_in_ball(&z, radius);
        if inside.is_empty() {
            continue;
        }
        // Configurations agreeing outside the ball share the key with the
        // inside digits zeroed.
        let key = |c: usize| inside.iter().fold(c, |acc, &k| acc - (c / pow[k] % m) * pow[k]);
        let mut range: HashMap<usize, (f64, f64)> = HashMap::new();
        for c in 0..n {
            let v = e.values[c];
            let r = range.entry(key(c)).or_insert((v, v));
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
        for (c, o) in out.iter_mut().enumerate() {
            let (lo, hi) = range[&key(c)];
            *o += (hi - lo).powi(2);
        }
    }
    let vol = ens.lattice_volume();
    out.iter_mut().for_each(|o| *o *= vol);
    out
}

/// `Σ_z ⟨(osc_{A|B_ℓ(z)} X)²⟩ · volume` by enumeration.
pub fn exact_oscillation_sum(ens: &EnumerableEnsemble, x: &Functional, radius: f64) -> Result<f64> {
    check_radius(radius)?;
    let e = enumerate(ens, x)?;
    Ok(oscillation_sum_of(ens, &e, radius))
}

fn oscillation_sum_of(ens: &EnumerableEnsemble, e: &Enumeration, radius: f64) -> f64 {
    let osc = oscillation_field(ens, e, radius);
    expectation(&e.probabilities, |c| osc[c])
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("ball radius must be positive"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgVerdict {
    pub ensemble: String,
    pub functional: String,
    pub configurations: usize,
    pub ell: f64,
    pub rho: f64,
    pub variance: f64,
    pub oscillation_sum: f64,
    /// `Var X / oscillation sum`, zero when both vanish.
    pub ratio: f64,
    pub passed: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// `Var X ≤ ρ⁻¹ Σ_z ⟨(osc_{A|B_ℓ(z)} X)²⟩`.
pub fn verify_sg(ens: &EnumerableEnsemble, name: &str, x: &Functional, ell: f64, rho: f64) -> Result<SgVerdict> {
    check_radius(ell)?;
    if !(rho > 0.0) {
        return Err(Error::param("rho must be positive"));
    }
    let e = enumerate(ens, x)?;
    Ok(sg_verdict(ens, name, &e, ell, rho))
}

fn sg_verdict(ens: &EnumerableEnsemble, name: &str, e: &Enumeration, ell: f64, rho: f64) -> SgVerdict {
    let variance = centered_moment(e, 2);
    let sum = oscillation_sum_of(ens, e, ell);
    SgVerdict {
        ensemble: ens.name.clone(),
        functional: name.to_string(),
        configurations: e.values.len(),
        ell,
        rho,
        variance,
        oscillation_sum: sum,
        ratio: ratio(variance, sum),
        passed: variance <= sum / rho * (1.0 + ROUNDING),
    }
}

/// Constant in the `q`-moment inequality with `ρ = 1`.
///
/// `q = 1` is the plain inequality. For `q ≥ 2` the moment form of the
/// Efron–Stein inequality gives `‖X − ⟨X⟩‖_{2q}² ≤ 2^{1/q}·2qκ·‖V‖_q` with
/// `κ = √e / (2(√e − 1))`, and `V` is dominated by the oscillation sum as
/// soon as every site is the center of some ball and the lattice cell
/// volume is at least one.
pub fn q_sg_constant(q: u32) -> f64 {
    if q <= 1 {
        return 1.0;
    }
    let e = std::f64::consts::E.sqrt();
    let kappa = e / (2.0 * (e - 1.0));
    let q = q as f64;
    2f64.powf(1.0 / q) * 2.0 * q * kappa
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QSgVerdict {
    pub ensemble: String,
    pub functional: String,
    pub configurations: usize,
    pub q: u32,
    pub ell: f64,
    /// `⟨(X − ⟨X⟩)^{2q}⟩^{1/q}`
    pub lhs: f64,
    /// `⟨(Σ_z osc²_{B_{2ℓ}(z)} · volume)^q⟩^{1/q}`
    pub rhs: f64,
    pub ratio: f64,
    pub constant: f64,
    pub passed: bool,
}

/// `q`-moment version with radius `2ℓ` on the right.
pub fn verify_q_sg(ens: &EnumerableEnsemble, name: &str, x: &Functional, ell: f64, q: u32) -> Result<QSgVerdict> {
    check_radius(ell)?;
    if !(1..=3).contains(&q) {
        return Err(Error::param(format!("q must be 1, 2 or 3, got {q}")));
    }
    let e = enumerate(ens, x)?;
    Ok(q_sg_verdict(ens, name, &e, ell, q))
}

fn q_sg_verdict(ens: &EnumerableEnsemble, name: &str, e: &Enumeration, ell: f64, q: u32) -> QSgVerdict {
    let inv = 1.0 / q as f64;
    let lhs = centered_moment(e, 2 * q as i32).powf(inv);
    let osc = oscillation_field(ens, e, 2.0 * ell);
    let rhs = expectation(&e.probabilities, |c| osc[c].powi(q as i32)).powf(inv);
    let constant = q_sg_constant(q);
    let r = ratio(lhs, rhs);
    QSgVerdict {
        ensemble: ens.name.clone(),
        functional: name.to_string(),
        configurations: e.values.len(),
        q,
        ell,
        lhs,
        rhs,
        ratio: r,
        constant,
        passed: lhs <= constant * rhs * (1.0 + ROUNDING),
    }
}

/// 1-D box of eight unit cells; the middle four are binary sites.
pub fn line_binary_ensemble(contrast: f64) -> Result<EnumerableEnsemble> {
    let grid = Grid::new(&BoxDomain::new(1, &[-4.0], &[4.0])?, 1.0)?;
    let base = CoefficientField::constant(&grid, scaled_identity(1, 1.0));
    let sites = (2..6).map(|c| Site { position: grid.center(c), cells: vec![c] }).collect();
    Ok(EnumerableEnsemble {
        name: "line_binary".into(),
        base_field: base,
        sites,
        values: vec![scaled_identity(1, contrast), scaled_identity(1, 1.0)],
        probabilities: vec![0.5, 0.5],
        lattice_origin: [0.5, 0.0, 0.0],
        lattice_spacing: 1.0,
    })
}

/// 2-D 3×3 box of unit cells, every cell a binary site.
pub fn square_binary_ensemble(contrast: f64) -> Result<EnumerableEnsemble> {
    let grid = Grid::centered(2, 1.5, 1.0)?;
    let base = CoefficientField::constant(&grid, scaled_identity(2, 1.0));
    let sites = (0..grid.len()).map(|c| Site { position: grid.center(c), cells: vec![c] }).collect();
    Ok(EnumerableEnsemble {
        name: "square_binary".into(),
        base_field: base,
        sites,
        values: vec![scaled_identity(2, contrast), scaled_identity(2, 1.0)],
        probabilities: vec![0.5, 0.5],
        lattice_origin: [0.0; 3],
        lattice_spacing: 1.0,
    })
}

/// 1-D box of six unit cells, each a three-valued site with unequal weights.
pub fn line_ternary_ensemble(contrast: f64) -> Result<EnumerableEnsemble> {
    let grid = Grid::new(&BoxDomain::new(1, &[-3.0], &[3.0])?, 1.0)?;
    let base = CoefficientField::constant(&grid, scaled_identity(1, 1.0));
    let sites = (0..grid.len()).map(|c| Site { position: grid.center(c), cells: vec![c] }).collect();
    let mid = 0.5 * (1.0 + contrast);
    Ok(EnumerableEnsemble {
        name: "line_ternary".into(),
        base_field: base,
        sites,
        values: vec![scaled_identity(1, contrast), scaled_identity(1, mid), scaled_identity(1, 1.0)],
        probabilities: vec![0.5, 0.3, 0.2],
        lattice_origin: [0.5, 0.0, 0.0],
        lattice_spacing: 1.0,
    })
}

/// Masked energy estimate `e₁·Ã_{T,L}e₁` on the field, with the mask
/// centered in the box.
pub fn estimator_functional(massive: f64, mask_radius: f64, settings: SolverSettings) -> impl Fn(&CoefficientField) -> Result<f64> + Sync {
    move |field: &CoefficientField| {
        let spec = OperatorSpec::new(field, massive);
        let op = Operator::new(&spec, settings.face_averaging)?;
        let mut xi = [0.0; 3];
        xi[0] = 1.0;
        let phi = op.solve_corrector(&xi, &settings, None)?;
        let phi_adj = if op.is_symmetric() {
            phi.clone()
        } else {
            Operator::new(&spec.adjoint(), settings.face_averaging)?.solve_corrector(&xi, &settings, None)?
        };
        let mask = AveragingMask::new(&field.grid, mask_radius)?;
        Ok(energy_estimate(&op, &phi, &phi_adj, &mask)?.value_with)
    }
}

type Boxed<'a> = Box<Functional<'a>>;

/// The battery functionals for an ensemble, by name.
pub fn battery_functionals(ens: &EnumerableEnsemble, settings: &SolverSettings) -> Vec<(String, Boxed<'static>)> {
    let site_cells: Vec<usize> = ens.sites.iter().map(|s| s.cells[0]).collect();
    let grid = ens.base_field.grid.clone();
    let ball: Vec<usize> = grid.cells_in_ball(&grid.midpoint(), 1.5);
    let first = site_cells[0];
    let sc = site_cells.clone();
    let sp = site_cells.clone();
    let sm = site_cells;
    let (massive, mask_radius) = if grid.dim() == 1 { (4.0, 3.0) } else { (2.0, 1.5) };
    vec![
        ("site_value".to_string(), Box::new(move |f: &CoefficientField| Ok(f.cells[first][0][0])) as Boxed),
        ("sum".to_string(), Box::new(move |f: &CoefficientField| Ok(sc.iter().map(|&c| f.cells[c][0][0]).sum()))),
        ("product".to_string(), Box::new(move |f: &CoefficientField| Ok(sp.iter().map(|&c| f.cells[c][0][0]).product()))),
        ("max".to_string(), Box::new(move |f: &CoefficientField| Ok(sm.iter().map(|&c| f.cells[c][0][0]).fold(f64::NEG_INFINITY, f64::max)))),
        (
            "ball_average".to_string(),
            Box::new(move |f: &CoefficientField| Ok(ball.iter().map(|&c| f.cells[c][0][0]).sum::<f64>() / ball.len() as f64)),
        ),
        (
            "harmonic_mean".to_string(),
            Box::new(|f: &CoefficientField| Ok(f.cells.len() as f64 / f.cells.iter().map(|a| 1.0 / a[0][0]).sum::<f64>())),
        ),
        ("energy_estimate".to_string(), Box::new(estimator_functional(massive, mask_radius, settings.clone()))),
        ("constant".to_string(), Box::new(|_: &CoefficientField| Ok(1.0))),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub ell: f64,
    pub rho: f64,
    pub sg: Vec<SgVerdict>,
    pub q_sg: Vec<QSgVerdict>,
    pub passed: bool,
}

/// Every battery functional on every bundled ensemble, with `ρ = 1`.
pub fn run_battery(contrast: f64, ell: f64, q_values: &[u32], settings: &SolverSettings) -> Result<BatteryReport> {
    let ensembles = [line_binary_ensemble(contrast)?, square_binary_ensemble(contrast)?, line_ternary_ensemble(contrast)?];
    let rho = 1.0;
    let mut sg = Vec::new();
    let mut q_sg = Vec::new();
    for ens in &ensembles {
        for (name, x) in battery_functionals(ens, settings) {
            let e = enumerate(ens, x.as_ref())?;
            sg.push(sg_verdict(ens, &name, &e, ell, rho));
            for &q in q_values {
                if !(1..=3).contains(&q) {
                    return Err(Error::param(format!("q must be 1, 2 or 3, got {q}")));
                }
                q_sg.push(q_sg_verdict(ens, &name, &e, ell, q));
            }
        }
    }
    let passed = sg.iter().all(|v| v.passed) && q_sg.iter().all(|v| v.passed);
    Ok(BatteryReport { ell, rho, sg, q_sg, passed })
}

/// Local observable: value attached to a cell of a realized field.
pub type LocalObservable<'a> = dyn Fn(&CoefficientField, usize) -> f64 + Sync + 'a;

/// `A₁₁` at the cell.
pub fn a11(field: &CoefficientField, cell: usize) -> f64 {
    field.cells[cell][0][0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicRow {
    #[serde(rename = "R")]
    pub radius: f64,
    pub mean: f64,
    pub mean_ci: f64,
    pub variance: f64,
    pub variance_ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub n_samples: usize,
    pub spacing: f64,
    pub rows: Vec<ErgodicRow>,
    /// Log-log fit of the variance against `R`; absent when every variance
    /// vanishes.
    pub fit: Option<LogLogFit>,
    pub degenerate: bool,
}

/// Variance of `⨍_{B_R} X` over independent realizations, per `R`.
///
/// `X` should depend on the field within distance 2 of the cell.
pub fn ergodic_average_probe(
    spec: &EnsembleSpec,
    observable: &LocalObservable,
    radii: &[f64],
    n_samples: usize,
    spacing: f64,
) -> Result<ErgodicReport> {
    spec.validate()?;
    if n_samples < 2 {
        return Err(Error::InsufficientData("need at least 2 samples".into()));
    }
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii must be positive and strictly increasing"));
    }
    let rmax = *radii.last().unwrap();
    let grid = Grid::centered(spec.dimension, rmax + spacing, spacing)?;
    let c = grid.midpoint();
    let balls: Vec<Vec<usize>> = radii.iter().map(|&r| grid.cells_in_ball(&c, r)).collect();
    if balls.iter().any(|b| b.is_empty()) {
        return Err(Error::Geometry("ball below grid resolution".into()));
    }
    let averages: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let field = realize_on_grid(spec, &grid, i)?;
            Ok(balls
                .iter()
                .map(|b| {
                    let v: Vec<f64> = b.iter().map(|&k| observable(&field, k)).collect();
                    stats::mean(&v)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (j, &r) in radii.iter().enumerate() {
        let v: Vec<f64> = averages.iter().map(|a| a[j]).collect();
        let (mean, mean_ci, variance, variance_ci) = if is_constant(&v) {
            (v[0], 0.0, 0.0, 0.0)
        } else {
            let m = stats::jackknife_mean(&v)?;
            let var = stats::jackknife_variance(&v)?;
            (m.value, m.ci_half_width, var.value, var.ci_half_width)
        };
        rows.push(ErgodicRow { radius: r, mean, mean_ci, variance, variance_ci });
    }
    let degenerate = rows.iter().any(|r| r.variance <= 0.0);
    let fit = if degenerate || rows.len() < 3 {
        None
    } else {
        Some(fit_loglog(&rows.iter().map(|r| (r.radius, r.variance, r.variance_ci)).collect::<Vec<_>>())?)
    };
    Ok(ErgodicReport { n_samples, spacing, rows, fit, degenerate })
}

/// Two-sided 95% interval of the fitted slope, if any.
pub fn slope_interval(report: &ErgodicReport) -> Option<(f64, f64)> {
    report.fit.as_ref().map(|f| (f.slope - Z95 * f.std_error, f.slope + Z95 * f.std_error))
}
