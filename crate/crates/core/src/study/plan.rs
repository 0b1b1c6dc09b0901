use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::estimator::Variant;
use crate::solver::SolverSettings;
use crate::tensor::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Variance,
    Systematic,
    Gradient,
    Moments,
    Sensitivity,
}

impl StudyKind {
    pub const ALL: [StudyKind; 5] =
        [StudyKind::Variance, StudyKind::Systematic, StudyKind::Gradient, StudyKind::Moments, StudyKind::Sensitivity];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Variance => "variance",
            StudyKind::Systematic => "systematic",
            StudyKind::Gradient => "gradient",
            StudyKind::Moments => "moments",
            StudyKind::Sensitivity => "sensitivity",
        }
    }

    /// Per-row quantity columns in `samples.csv`.
    pub fn quantities(self) -> &'static [&'static str] {
        match self {
            StudyKind::Variance | StudyKind::Systematic => &["value_with", "value_without", "zero_order"],
            StudyKind::Gradient => &["grad_diff", "phi_diff"],
            StudyKind::Moments => &["phi0", "grad_energy"],
            StudyKind::Sensitivity => &["distance", "osc", "h_T", "energy_3R", "ratio"],
        }
    }

    /// Whether one realization is shared by every `T` of a cell.
    pub fn is_coupled(self) -> bool {
        !matches!(self, StudyKind::Variance)
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param(format!("unknown study kind {s:?}")))
    }
}

fn e1() -> Vec<f64> {
    vec![1.0]
}
fn three() -> f64 {
    3.0
}
fn quarter() -> f64 {
    0.25
}
fn two_hundred() -> usize {
    200
}
fn one() -> f64 {
    1.0
}
fn q_default() -> Vec<f64> {
    vec![2.0]
}
fn distances_default() -> Vec<f64> {
    vec![6.0, 12.0, 24.0]
}
fn six() -> usize {
    6
}
fn power_default() -> f64 {
    0.2
}
fn variant_default() -> Variant {
    Variant::WithoutZeroOrder
}

/// Parameters of a Monte Carlo study.
///
/// The box radius of a cell is `R = L + κ√T` with `T` the largest massive
/// parameter solved in that cell, so `R − L ≥ 2√T` whenever `κ ≥ 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyPlan {
    pub ensemble: EnsembleSpec,
    /// Directions; padded with zeros to the dimension.
    #[serde(default = "e1")]
    pub xi: Vec<f64>,
    #[serde(default = "e1")]
    pub xi_prime: Vec<f64>,
    #[serde(rename = "L_values", default)]
    pub l_values: Vec<f64>,
    #[serde(rename = "T_values", default)]
    pub t_values: Vec<f64>,
    /// Variance study only: `T = t_per_l · L` instead of a `T` grid.
    #[serde(default)]
    pub t_per_l: Option<f64>,
    #[serde(default = "three")]
    pub truncation_multiplier: f64,
    #[serde(default = "quarter")]
    pub spacing: f64,
    #[serde(default = "two_hundred")]
    pub n_samples: usize,
    /// Master seed; replaces the ensemble's own.
    #[serde(default)]
    pub seed: u64,
    /// Estimator variant for the systematic study.
    #[serde(default = "variant_default")]
    pub variant: Variant,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Ball radius for the gradient moments.
    #[serde(default = "one")]
    pub probe_radius: f64,
    #[serde(default = "q_default")]
    pub q_values: Vec<f64>,
    /// Sensitivity probe distances `|z − x|`.
    #[serde(default = "distances_default")]
    pub distances: Vec<f64>,
    #[serde(default = "one")]
    pub perturbation_radius: f64,
    #[serde(default = "six")]
    pub random_fills: usize,
    /// Paired differences must be resolved to this fraction.
    #[serde(default = "power_default")]
    pub power_ratio: f64,
}

/// Unit of work: a set of samples sharing `(L, R)` and the `T` values
/// solved on each realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub index: usize,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "T_values")]
    pub t_values: Vec<f64>,
    #[serde(rename = "R")]
    pub r: f64,
    pub expected_rows: usize,
}

fn check_dyadic(ts: &[f64], what: &str) -> Result<()> {
    if ts.windows(2).any(|w| !((w[1] / w[0] - 2.0).abs() <= 1e-9)) {
        return Err(Error::param(format!("{what} requires dyadic T values, got {ts:?}")));
    }
    Ok(())
}

fn check_increasing(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(format!("{what} must be positive and strictly increasing, got {v:?}")));
    }
    Ok(())
}

impl StudyPlan {
    pub fn new(ensemble: EnsembleSpec) -> Self {
        StudyPlan {
            ensemble,
            xi: e1(),
            xi_prime: e1(),
            l_values: Vec::new(),
            t_values: Vec::new(),
            t_per_l: None,
            truncation_multiplier: three(),
            spacing: quarter(),
            n_samples: two_hundred(),
            seed: 0,
            variant: variant_default(),
            solver: SolverSettings::default(),
            probe_radius: one(),
            q_values: q_default(),
            distances: distances_default(),
            perturbation_radius: one(),
            random_fills: six(),
            power_ratio: power_default(),
        }
    }

    pub fn effective_ensemble(&self) -> EnsembleSpec {
        EnsembleSpec { master_seed: self.seed, ..self.ensemble.clone() }
    }

    fn direction(&self, v: &[f64], what: &str) -> Result<Vector> {
        let d = self.ensemble.dimension;
        if v.len() > d || v.is_empty() {
            return Err(Error::param(format!("{what} must have between 1 and {d} components")));
        }
        let mut out = [0.0; 3];
        out[..v.len()].copy_from_slice(v);
        let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= 1e-9) {
            return Err(Error::param(format!("{what} must be a unit vector")));
        }
        Ok(out)
    }

    pub fn xi_vector(&self) -> Result<Vector> {
        self.direction(&self.xi, "xi")
    }

    pub fn xi_prime_vector(&self) -> Result<Vector> {
        self.direction(&self.xi_prime, "xi_prime")
    }

    /// Range of dependence of the coefficient law.
    pub fn correlation_length(&self) -> f64 {
        match self.ensemble.kind {
            EnsembleKind::PoissonInclusion => 2.0 * self.ensemble.inclusion_radius,
            EnsembleKind::IidCheckerboard => 1.0,
            EnsembleKind::Laminate => self.ensemble.band_width,
            EnsembleKind::ConstantMatrix => 0.0,
        }
    }

    pub fn validate(&self, kind: StudyKind) -> Result<()> {
        self.ensemble.validate()?;
        self.solver.validate()?;
        self.xi_vector()?;
        self.xi_prime_vector()?;
        if self.n_samples < 8 {
            return Err(Error::param(format!("n_samples must be at least 8, got {}", self.n_samples)));
        }
        if !(self.truncation_multiplier >= 2.0) {
            return Err(Error::param(format!(
                "truncation_multiplier must be at least 2 so that R - L >= 2 sqrt(T), got {}",
                self.truncation_multiplier
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::param("spacing must be positive"));
        }
        if self.ensemble.kind == EnsembleKind::PoissonInclusion && self.spacing > 0.5 * self.ensemble.inclusion_radius + 1e-12 {
            return Err(Error::param(format!(
                "spacing {} must resolve the inclusions (at most half the radius {})",
                self.spacing, self.ensemble.inclusion_radius
            )));
        }
        if !(self.power_ratio > 0.0 && self.power_ratio <= 1.0) {
            return Err(Error::param("power_ratio must lie in (0, 1]"));
        }
        let uses_l = matches!(kind, StudyKind::Variance | StudyKind::Systematic | StudyKind::Gradient);
        if uses_l {
            if self.l_values.is_empty() {
                return Err(Error::param(format!("{kind} study needs L_values")));
            }
            check_increasing(&self.l_values, "L_values")?;
            let min_l = 4.0 * self.correlation_length();
            if let Some(&l) = self.l_values.iter().find(|&&l| l < min_l) {
                return Err(Error::param(format!("L = {l} is below four correlation lengths ({min_l})")));
            }
        } else if !self.l_values.is_empty() {
            check_increasing(&self.l_values, "L_values")?;
        }
        match kind {
            StudyKind::Variance => match self.t_per_l {
                Some(r) => {
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(Error::param("t_per_l must be positive"));
                    }
                    if !self.t_values.is_empty() {
                        return Err(Error::param("give either T_values or t_per_l, not both"));
                    }
                }
                None => {
                    if self.t_values.is_empty() {
                        return Err(Error::param("variance study needs T_values or t_per_l"));
                    }
                    check_increasing(&self.t_values, "T_values")?;
                }
            },
            StudyKind::Systematic => {
                check_increasing(&self.t_values, "T_values")?;
                if self.t_values.len() < 4 {
                    return Err(Error::param("systematic study needs at least 4 T values"));
                }
                check_dyadic(&self.t_values, "systematic study")?;
            }
            StudyKind::Gradient => {
                check_increasing(&self.t_values, "T_values")?;
                if self.t_values.len() < 3 {
                    return Err(Error::param("gradient study needs at least 3 T values"));
                }
                check_dyadic(&self.t_values, "gradient study")?;
            }
            StudyKind::Moments => {
                check_increasing(&self.t_values, "T_values")?;
                if self.t_values.len() < 3 {
                    return Err(Error::param("moment study needs at least 3 T values"));
                }
                if !(self.probe_radius > 0.0) {
                    return Err(Error::param("probe_radius must be positive"));
                }
                if self.q_values.is_empty() || self.q_values.iter().any(|&q| !(q >= 1.0)) {
                    return Err(Error::param("q_values must be nonempty and at least 1"));
                }
            }
            StudyKind::Sensitivity => {
                check_increasing(&self.t_values, "T_values")?;
                check_increasing(&self.distances, "distances")?;
                if !(self.perturbation_radius > 0.0) {
                    return Err(Error::param("perturbation_radius must be positive"));
                }
                if self.distances[0] < 2.0 * self.perturbation_radius {
                    return Err(Error::param("distances must be at least twice the perturbation radius"));
                }
            }
        }
        Ok(())
    }

    /// Work units of a study, in execution order.
    pub fn cells(&self, kind: StudyKind) -> Result<Vec<StudyCell>> {
        self.validate(kind)?;
        let k = self.truncation_multiplier;
        let n = self.n_samples;
        let mut out = Vec::new();
        let mut push = |l: f64, ts: Vec<f64>, r: f64, rows: usize| {
            let index = out.len();
            out.push(StudyCell { index, l, t_values: ts, r, expected_rows: rows });
        };
        match kind {
            StudyKind::Variance => {
                for &l in &self.l_values {
                    let ts = match self.t_per_l {
                        Some(ratio) => vec![ratio * l],
                        None => self.t_values.clone(),
                    };
                    for t in ts {
                        push(l, vec![t], l + k * t.sqrt(), n);
                    }
                }
            }
            StudyKind::Systematic => {
                let tmax = *self.t_values.last().unwrap();
                for &l in &self.l_values {
                    push(l, self.t_values.clone(), l + k * tmax.sqrt(), n * self.t_values.len());
                }
            }
            StudyKind::Gradient => {
                let tmax = 2.0 * self.t_values.last().unwrap();
                for &l in &self.l_values {
                    push(l, self.t_values.clone(), l + k * tmax.sqrt(), n * self.t_values.len());
                }
            }
            StudyKind::Moments => {
                let tmax = *self.t_values.last().unwrap();
                let ls = if self.l_values.is_empty() { vec![0.0] } else { self.l_values.clone() };
                for l in ls {
                    let r = (l + k * tmax.sqrt()).max(2.0 * self.probe_radius);
                    push(l, self.t_values.clone(), r, n * self.t_values.len());
                }
            }
            StudyKind::Sensitivity => {
                let reach = self.distances.last().unwrap() + 3.0 * self.perturbation_radius;
                for &t in &self.t_values {
                    push(0.0, vec![t], reach + k * t.sqrt(), n * self.distances.len());
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> StudyPlan {
        let mut p = StudyPlan::new(EnsembleSpec::poisson(2, 0.25, 0));
        p.l_values = vec![8.0, 16.0];
        p.t_per_l = Some(1.0);
        p
    }

    #[test]
    fn kinds_round_trip() {
        for k in StudyKind::ALL {
            assert_eq!(k.name().parse::<StudyKind>().unwrap(), k);
        }
        assert!("bogus".parse::<StudyKind>().is_err());
    }

    #[test]
    fn variance_cells_follow_truncation_rule() {
        let cells = plan().cells(StudyKind::Variance).unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            let t = c.t_values[0];
            assert_eq!(t, c.l);
            assert!(c.r - c.l >= 2.0 * t.sqrt());
        }
    }

    #[test]
    fn invariants_are_enforced() {
        let mut p = plan();
        p.truncation_multiplier = 1.5;
        assert!(p.validate(StudyKind::Variance).is_err());
        let mut p = plan();
        p.n_samples = 4;
        assert!(p.validate(StudyKind::Variance).is_err());
        let mut p = plan();
        p.l_values = vec![4.0];
        assert!(p.validate(StudyKind::Variance).is_err());
        let mut p = plan();
        p.spacing = 0.75;
        assert!(p.validate(StudyKind::Variance).is_err());
        let mut p = plan();
        p.t_per_l = None;
        p.t_values = vec![16.0, 32.0, 48.0, 64.0];
        assert!(p.validate(StudyKind::Systematic).is_err());
        p.t_values = vec![16.0, 32.0, 64.0, 128.0];
        assert!(p.validate(StudyKind::Systematic).is_ok());
        p.xi = vec![1.0, 1.0];
        assert!(p.validate(StudyKind::Systematic).is_err());
    }

    #[test]
    fn serde_defaults_and_unknown_keys() {
        let s = r#"{"ensemble": {"kind": "poisson_inclusion", "dimension": 2}, "L_values": [8], "t_per_l": 1.0}"#;
        let p: StudyPlan = serde_json::from_str(s).unwrap();
        assert_eq!(p.n_samples, 200);
        assert_eq!(p.truncation_multiplier, 3.0);
        assert!(serde_json::from_str::<StudyPlan>(r#"{"ensemble": {"kind": "constant_matrix", "dimension": 2}, "bogus": 1}"#).is_err());
    }
}
