use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SampleRow, StudyKind, StudyPlan};
use crate::error::{Error, Result};
use crate::estimator::{moments_from_observables, richardson_weights, MomentEstimate, Variant};
use crate::stats::{self, Estimate, Z95};

/// Log-log slope with its uncertainty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    /// 95% half-width.
    pub ci: f64,
    pub r_squared: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
    pub n_points: usize,
}

impl SlopeFit {
    pub fn contains(&self, target: f64, k_se: f64) -> bool {
        (self.slope - target).abs() <= k_se * self.std_error
    }
}

/// Weighted log-log fit of `(x, y, y_ci)` points.
pub fn fit_loglog_slope(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    let f = stats::fit_loglog(points)?;
    Ok(SlopeFit {
        slope: f.slope,
        std_error: f.std_error,
        ci: Z95 * f.std_error,
        r_squared: f.r_squared,
        intercept: f.intercept,
        residuals: f.residuals,
        n_points: points.len(),
    })
}

/// One line of `slopes.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub quantity: String,
    pub group: String,
    pub slope: f64,
    pub std_error: f64,
    pub ci: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl SlopeRecord {
    fn new(quantity: &str, group: &str, f: &SlopeFit) -> Self {
        SlopeRecord {
            quantity: quantity.into(),
            group: group.into(),
            slope: f.slope,
            std_error: f.std_error,
            ci: f.ci,
            r_squared: f.r_squared,
            n_points: f.n_points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Summary {
    Variance(VarianceSummary),
    Systematic(SystematicSummary),
    Gradient(GradientSummary),
    Moments(MomentSummary),
    Sensitivity(SensitivitySummary),
}

impl Summary {
    pub fn slopes(&self) -> Vec<SlopeRecord> {
        match self {
            Summary::Variance(s) => s.fits.iter().map(|f| SlopeRecord::new(&f.quantity, &f.group, &f.fit)).collect(),
            Summary::Systematic(s) => s
                .per_l
                .iter()
                .filter_map(|c| c.fit.as_ref().map(|f| SlopeRecord::new("abs_error", &format!("L={}", c.l), f)))
                .collect(),
            Summary::Gradient(s) => s
                .per_l
                .iter()
                .flat_map(|c| {
                    let g = format!("L={}", c.l);
                    [("grad_diff", &c.fit_grad), ("phi_diff", &c.fit_phi)]
                        .into_iter()
                        .filter_map(move |(q, f)| f.as_ref().map(|f| SlopeRecord::new(q, &g, f)))
                })
                .collect(),
            Summary::Moments(_) | Summary::Sensitivity(_) => Vec::new(),
        }
    }
}

/// Rows grouped by cell and then by `T`, each sorted by sample index.
fn group(rows: &[SampleRow]) -> BTreeMap<usize, BTreeMap<u64, Vec<&SampleRow>>> {
    let mut out: BTreeMap<usize, BTreeMap<u64, Vec<&SampleRow>>> = BTreeMap::new();
    for r in rows {
        out.entry(r.cell).or_default().entry(r.t.to_bits()).or_default().push(r);
    }
    for cell in out.values_mut() {
        for v in cell.values_mut() {
            v.sort_by_key(|r| r.sample_index);
        }
    }
    out
}

fn column(rows: &[&SampleRow], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r.values[j]).collect()
}

/// Per-`T` row lists of a cell in ascending `T`.
fn by_t<'a>(cell: &BTreeMap<u64, Vec<&'a SampleRow>>) -> Vec<(f64, Vec<&'a SampleRow>)> {
    let mut v: Vec<(f64, Vec<&SampleRow>)> = cell.values().map(|rs| (rs[0].t, rs.clone())).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

pub fn summarize(plan: &StudyPlan, kind: StudyKind, rows: &[SampleRow]) -> Result<Summary> {
    let width = kind.quantities().len();
    if let Some(r) = rows.iter().find(|r| r.values.len() != width) {
        return Err(Error::Format(format!("row of cell {} has {} values, expected {width}", r.cell, r.values.len())));
    }
    Ok(match kind {
        StudyKind::Variance => Summary::Variance(summarize_variance(rows)?),
        StudyKind::Systematic => Summary::Systematic(summarize_systematic(plan, rows)?),
        StudyKind::Gradient => Summary::Gradient(summarize_gradient(rows)?),
        StudyKind::Moments => Summary::Moments(summarize_moments(plan, rows)?),
        StudyKind::Sensitivity => Summary::Sensitivity(summarize_sensitivity(rows)?),
    })
}

// ---------------------------------------------------------------- variance

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceGroup {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub n_samples: usize,
    pub mean_with: Estimate,
    pub mean_without: Estimate,
    pub var_with: Estimate,
    pub var_without: Estimate,
    /// Variance of `∫ T⁻¹φ'φ η_L`.
    pub var_zero_order: Estimate,
    /// Variance of `∫ φ'φ η_L`, the zero-order term without its `T⁻¹`.
    pub var_zero_unscaled: Estimate,
    pub max_residual: f64,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceFit {
    pub quantity: String,
    /// The fixed regime of the fitted points, e.g. `T/L=1`.
    pub group: String,
    pub fit: SlopeFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub groups: Vec<VarianceGroup>,
    pub fits: Vec<VarianceFit>,
    /// Some estimator variance vanished, so no slope is meaningful.
    pub degenerate: bool,
}

impl VarianceSummary {
    pub fn fit(&self, quantity: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.quantity == quantity).map(|f| &f.fit)
    }
}

fn summarize_variance(rows: &[SampleRow]) -> Result<VarianceSummary> {
    let mut groups = Vec::new();
    for cell in group(rows).values() {
        for (t, rs) in by_t(cell) {
            let with = column(&rs, 0);
            let without = column(&rs, 1);
            let zero = column(&rs, 2);
            let unscaled: Vec<f64> = zero.iter().map(|z| z * t).collect();
            groups.push(VarianceGroup {
                l: rs[0].l,
                t,
                r: rs[0].r,
                n_samples: rs.len(),
                mean_with: stats::jackknife_mean(&with)?,
                mean_without: stats::jackknife_mean(&without)?,
                var_with: stats::jackknife_variance(&with)?,
                var_without: stats::jackknife_variance(&without)?,
                var_zero_order: stats::jackknife_variance(&zero)?,
                var_zero_unscaled: stats::jackknife_variance(&unscaled)?,
                max_residual: rs.iter().map(|r| r.residual).fold(0.0, f64::max),
                mean_iterations: stats::mean(&rs.iter().map(|r| r.iterations as f64).collect::<Vec<_>>()),
            });
        }
    }
    let degenerate = groups.iter().any(|g| g.var_with.value <= 0.0 || g.var_without.value <= 0.0);

    // Fits run over L inside a regime where T/L (or T/L²) is fixed.
    let mut regimes: BTreeMap<String, Vec<&VarianceGroup>> = BTreeMap::new();
    for g in &groups {
        let key = if let Some(k) = [1.0, 2.0].iter().find(|&&p| regime_matches(&groups, p, g)) {
            format!("T/L^{k}={}", round_sig(g.t / g.l.powf(*k)))
        } else {
            format!("T={}", g.t)
        };
        regimes.entry(key).or_default().push(g);
    }
    let mut fits = Vec::new();
    if !degenerate {
        for (key, gs) in &regimes {
            if gs.len() < 3 {
                continue;
            }
            let quantities: [(&str, Box<dyn Fn(&VarianceGroup) -> (f64, f64)>); 6] = [
                ("var_without", Box::new(|g| (g.var_without.value, g.var_without.ci_half_width))),
                ("var_with", Box::new(|g| (g.var_with.value, g.var_with.ci_half_width))),
                ("var_zero_order", Box::new(|g| (g.var_zero_order.value, g.var_zero_order.ci_half_width))),
                ("var_zero_unscaled", Box::new(|g| (g.var_zero_unscaled.value, g.var_zero_unscaled.ci_half_width))),
                (
                    "var_without_log_corrected",
                    Box::new(|g| {
                        let c = (2.0 + g.t.sqrt() / g.l).ln();
                        (g.var_without.value / c, g.var_without.ci_half_width / c)
                    }),
                ),
                (
                    "var_with_log_corrected",
                    Box::new(|g| {
                        let c = (2.0 + g.t.sqrt() / g.l).ln();
                        (g.var_with.value / c, g.var_with.ci_half_width / c)
                    }),
                ),
            ];
            for (name, f) in &quantities {
                let pts: Vec<(f64, f64, f64)> = gs
                    .iter()
                    .map(|g| {
                        let (y, ci) = f(g);
                        (g.l, y, ci)
                    })
                    .collect();
                if pts.iter().all(|p| p.1 > 0.0) {
                    fits.push(VarianceFit { quantity: (*name).into(), group: key.clone(), fit: fit_loglog_slope(&pts)? });
                }
            }
        }
    }
    Ok(VarianceSummary { groups, fits, degenerate })
}

fn round_sig(x: f64) -> f64 {
    let s = format!("{x:.9e}");
    s.parse().unwrap_or(x)
}

/// Whether at least three groups share `T/L^p` with `g`.
fn regime_matches(all: &[VarianceGroup], p: f64, g: &VarianceGroup) -> bool {
    let r = g.t / g.l.powf(p);
    let n = all.iter().filter(|o| ((o.t / o.l.powf(p)) / r - 1.0).abs() <= 1e-9).count();
    let distinct_l = all.iter().any(|o| o.l != g.l);
    n >= 3 && distinct_l
}

// -------------------------------------------------------------- systematic

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    Underpowered,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystematicPoint {
    #[serde(rename = "T")]
    pub t: f64,
    pub a_t: Estimate,
    /// Paired `A_T − ref`.
    pub error: Estimate,
    /// Paired `A_{2T} − A_T`; absent at the largest `T`.
    pub next_difference: Option<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystematicCell {
    #[serde(rename = "L")]
    pub l: f64,
    pub n_samples: usize,
    pub variant: Variant,
    pub points: Vec<SystematicPoint>,
    pub reference: Estimate,
    pub fit_range: Vec<f64>,
    pub verdict: Verdict,
    /// Only reported with an `ok` verdict.
    pub fit: Option<SlopeFit>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystematicSummary {
    pub per_l: Vec<SystematicCell>,
}

fn variant_index(v: Variant) -> usize {
    match v {
        Variant::WithZeroOrder => 0,
        Variant::WithoutZeroOrder => 1,
        Variant::ZeroOrderOnly => 2,
    }
}

/// Per-sample values at each `T`, aligned by sample index.
fn paired(cell: &BTreeMap<u64, Vec<&SampleRow>>, j: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let ts = by_t(cell);
    let idx: Vec<u64> = ts[0].1.iter().map(|r| r.sample_index).collect();
    for (t, rs) in &ts {
        if rs.iter().map(|r| r.sample_index).ne(idx.iter().copied()) {
            return Err(Error::InsufficientData(format!("samples at T = {t} are not paired with the other T values")));
        }
    }
    Ok((ts.iter().map(|t| t.0).collect(), ts.iter().map(|(_, rs)| column(rs, j)).collect()))
}

fn summarize_systematic(plan: &StudyPlan, rows: &[SampleRow]) -> Result<SystematicSummary> {
    let j = variant_index(plan.variant);
    let w = richardson_weights(2);
    let mut per_l = Vec::new();
    for cell in group(rows).values() {
        let l = cell.values().next().unwrap()[0].l;
        let (ts, vals) = paired(cell, j)?;
        let m = ts.len();
        if m < 4 {
            return Err(Error::InsufficientData(format!("systematic cell L = {l} has {m} T values, need 4")));
        }
        let n = vals[0].len();
        let reference: Vec<f64> = (0..n).map(|i| (0..3).map(|k| w[k] * vals[m - 3 + k][i]).sum()).collect();
        let mut points = Vec::new();
        for k in 0..m {
            let err: Vec<f64> = (0..n).map(|i| vals[k][i] - reference[i]).collect();
            let next = if k + 1 < m {
                let d: Vec<f64> = (0..n).map(|i| vals[k + 1][i] - vals[k][i]).collect();
                Some(stats::jackknife_mean(&d)?)
            } else {
                None
            };
            points.push(SystematicPoint {
                t: ts[k],
                a_t: stats::jackknife_mean(&vals[k])?,
                error: stats::jackknife_mean(&err)?,
                next_difference: next,
            });
        }
        let fit_pts = &points[..m - 2];
        let mut notes = Vec::new();
        let degenerate = points.iter().filter_map(|p| p.next_difference).all(|d| d.value == 0.0)
            || fit_pts.iter().any(|p| p.error.value == 0.0);
        let verdict = if degenerate {
            notes.push("A_T does not vary with T".into());
            Verdict::Degenerate
        } else {
            for p in fit_pts {
                let d = p.next_difference.unwrap();
                if d.ci_half_width > plan.power_ratio * d.value.abs() {
                    notes.push(format!(
                        "T = {}: CI {:.3e} of A_2T - A_T exceeds {} x |{:.3e}|",
                        p.t, d.ci_half_width, plan.power_ratio, d.value
                    ));
                }
                if p.error.ci_half_width >= 0.5 * p.error.value.abs() {
                    notes.push(format!(
                        "T = {}: CI {:.3e} of A_T - ref is at least half of |{:.3e}|",
                        p.t, p.error.ci_half_width, p.error.value
                    ));
                }
            }
            if notes.is_empty() {
                Verdict::Ok
            } else {
                Verdict::Underpowered
            }
        };
        let fit = if verdict == Verdict::Ok {
            Some(two_or_more_point_fit(
                &fit_pts.iter().map(|p| (p.t, p.error.value.abs(), p.error.ci_half_width)).collect::<Vec<_>>(),
            )?)
        } else {
            None
        };
        per_l.push(SystematicCell {
            l,
            n_samples: n,
            variant: plan.variant,
            reference: stats::jackknife_mean(&reference)?,
            fit_range: fit_pts.iter().map(|p| p.t).collect(),
            points,
            verdict,
            fit,
            notes,
        });
    }
    Ok(SystematicSummary { per_l })
}

/// As [`fit_loglog_slope`], with a delta-method slope error when only two
/// points are available.
fn two_or_more_point_fit(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    if points.len() != 2 {
        return fit_loglog_slope(points);
    }
    let (a, b) = (points[0], points[1]);
    if !(a.1 > 0.0 && b.1 > 0.0 && a.0 > 0.0 && b.0 > 0.0) {
        return Err(Error::param("nonpositive values in log-log fit"));
    }
    let dx = (b.0 / a.0).ln();
    if dx == 0.0 {
        return Err(Error::DegenerateAbscissa);
    }
    let slope = (b.1 / a.1).ln() / dx;
    let se = ((a.2 / Z95 / a.1).powi(2) + (b.2 / Z95 / b.1).powi(2)).sqrt() / dx.abs();
    Ok(SlopeFit {
        slope,
        std_error: se,
        ci: Z95 * se,
        r_squared: 1.0,
        intercept: a.1.ln() - slope * a.0.ln(),
        residuals: vec![0.0, 0.0],
        n_points: 2,
    })
}

// ---------------------------------------------------------------- gradient

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientPoint {
    #[serde(rename = "T")]
    pub t: f64,
    /// `⟨∫ |∇φ_{2T} − ∇φ_T|² η_L⟩`
    pub d_t: Estimate,
    /// `⟨∫ (φ_{2T} − φ_T)² η_L⟩`
    pub phi_diff: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCell {
    #[serde(rename = "L")]
    pub l: f64,
    pub n_samples: usize,
    pub points: Vec<GradientPoint>,
    pub fit_grad: Option<SlopeFit>,
    pub fit_phi: Option<SlopeFit>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientSummary {
    pub per_l: Vec<GradientCell>,
}

fn summarize_gradient(rows: &[SampleRow]) -> Result<GradientSummary> {
    let mut per_l = Vec::new();
    for cell in group(rows).values() {
        let ts = by_t(cell);
        let mut points = Vec::new();
        for (t, rs) in &ts {
            points.push(GradientPoint {
                t: *t,
                d_t: stats::jackknife_mean(&column(rs, 0))?,
                phi_diff: stats::jackknife_mean(&column(rs, 1))?,
            });
        }
        let degenerate = points.iter().any(|p| p.d_t.value <= 0.0);
        let fit = |f: &dyn Fn(&GradientPoint) -> Estimate| -> Result<Option<SlopeFit>> {
            let pts: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.t, f(p).value, f(p).ci_half_width)).collect();
            if pts.len() < 3 || pts.iter().any(|p| p.1 <= 0.0) {
                return Ok(None);
            }
            fit_loglog_slope(&pts).map(Some)
        };
        let fit_grad = fit(&|p| p.d_t)?;
        let fit_phi = fit(&|p| p.phi_diff)?;
        per_l.push(GradientCell {
            l: ts[0].1[0].l,
            n_samples: ts[0].1.len(),
            points,
            fit_grad,
            fit_phi,
            degenerate,
        });
    }
    Ok(GradientSummary { per_l })
}

// ----------------------------------------------------------------- moments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogGrowthFit {
    /// Slope of `moment_phi²` against `ln T`.
    pub slope: f64,
    pub std_error: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCell {
    #[serde(rename = "L")]
    pub l: f64,
    pub table: Vec<MomentEstimate>,
    /// Order used for the checks; `2` when present.
    pub check_q: f64,
    pub phi_growth: Option<LogGrowthFit>,
    pub phi_growth_passed: bool,
    /// `max / min` of `moment_grad` over `T`.
    pub grad_ratio: f64,
    pub grad_flat_passed: bool,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub per_cell: Vec<MomentCell>,
}

pub const GROWTH_R_SQUARED: f64 = 0.8;
pub const GRAD_FLATNESS: f64 = 2.0;

fn summarize_moments(plan: &StudyPlan, rows: &[SampleRow]) -> Result<MomentSummary> {
    let check_q = if plan.q_values.contains(&2.0) { 2.0 } else { plan.q_values[0] };
    let mut per_cell = Vec::new();
    for cell in group(rows).values() {
        let ts = by_t(cell);
        let mut table = Vec::new();
        for &q in &plan.q_values {
            for (t, rs) in &ts {
                let obs: Vec<(f64, f64)> = rs.iter().map(|r| (r.values[0], r.values[1])).collect();
                table.push(moments_from_observables(&obs, q, *t)?);
            }
        }
        let checked: Vec<&MomentEstimate> = table.iter().filter(|m| m.q == check_q).collect();
        let degenerate = checked.iter().all(|m| m.moment_phi == 0.0 && m.moment_grad == 0.0);
        let x: Vec<f64> = checked.iter().map(|m| m.massive.ln()).collect();
        let y: Vec<f64> = checked.iter().map(|m| m.moment_phi * m.moment_phi).collect();
        let phi_growth = if degenerate {
            None
        } else {
            let f = stats::linear_fit(&x, &y, None)?;
            Some(LogGrowthFit { slope: f.slope, std_error: f.slope_std_error, r_squared: f.r_squared })
        };
        let phi_growth_passed = phi_growth.as_ref().is_some_and(|f| f.slope > 0.0 && f.r_squared >= GROWTH_R_SQUARED);
        let gmax = checked.iter().map(|m| m.moment_grad).fold(f64::NEG_INFINITY, f64::max);
        let gmin = checked.iter().map(|m| m.moment_grad).fold(f64::INFINITY, f64::min);
        let grad_ratio = if gmin > 0.0 { gmax / gmin } else { f64::INFINITY };
        per_cell.push(MomentCell {
            l: ts[0].1[0].l,
            table,
            check_q,
            phi_growth,
            phi_growth_passed,
            grad_ratio,
            grad_flat_passed: grad_ratio <= GRAD_FLATNESS,
            degenerate,
        });
    }
    Ok(MomentSummary { per_cell })
}

// ------------------------------------------------------------- sensitivity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub distance: f64,
    pub n: usize,
    pub p95: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    #[serde(rename = "T")]
    pub t: f64,
    pub per_distance: Vec<DistanceStats>,
    /// `max / min` of the 95th percentiles over distances.
    pub stability: f64,
    pub passed: bool,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub per_cell: Vec<SensitivityCell>,
}

pub const SENSITIVITY_STABILITY: f64 = 3.0;

fn summarize_sensitivity(rows: &[SampleRow]) -> Result<SensitivitySummary> {
    let mut per_cell = Vec::new();
    for cell in group(rows).values() {
        let rs: Vec<&SampleRow> = cell.values().flatten().copied().collect();
        let mut by_d: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &rs {
            by_d.entry(r.values[0].to_bits()).or_default().push(r.values[4]);
        }
        let mut per_distance: Vec<DistanceStats> = by_d
            .iter()
            .map(|(d, v)| DistanceStats {
                distance: f64::from_bits(*d),
                n: v.len(),
                p95: stats::quantile(v, 0.95),
                median: stats::quantile(v, 0.5),
                max: v.iter().copied().fold(0.0, f64::max),
            })
            .collect();
        per_distance.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        let hi = per_distance.iter().map(|d| d.p95).fold(0.0, f64::max);
        let lo = per_distance.iter().map(|d| d.p95).fold(f64::INFINITY, f64::min);
        let degenerate = hi == 0.0;
        let stability = if degenerate {
            1.0
        } else if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        };
        per_cell.push(SensitivityCell {
            t: rs[0].t,
            per_distance,
            stability,
            passed: !degenerate && stability <= SENSITIVITY_STABILITY,
            degenerate,
        });
    }
    Ok(SensitivitySummary { per_cell })
}
