//! Homogenized-coefficient estimates and corrector statistics computed from
//! solved realizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AveragingMask;
use crate::grid::{cell_gradient, CoefficientField, GridFunction};
use crate::solver::{CorrectorSolution, Operator};
use crate::stats::{self, Estimate};
use crate::tensor::{self, Vector};

/// Masked energy of one realization for the direction pair `(ξ, ξ')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub sample_index: u64,
    pub seed: u64,
    #[serde(rename = "T")]
    pub massive: f64,
    #[serde(rename = "L")]
    pub mask_radius: f64,
    #[serde(rename = "R")]
    pub domain_radius: f64,
    pub xi: Vector,
    pub xi_prime: Vector,
    /// `∫ (T⁻¹φ'φ + (ξ'+∇φ')·A(ξ+∇φ)) η_L`
    pub value_with: f64,
    /// `∫ (ξ'+∇φ')·A(ξ+∇φ) η_L`
    pub value_without: f64,
    /// `∫ T⁻¹φ'φ η_L`
    pub zero_order: f64,
}

/// Which of the two estimator variants to aggregate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    WithZeroOrder,
    WithoutZeroOrder,
    ZeroOrderOnly,
}

impl EnergyEstimate {
    pub fn value(&self, v: Variant) -> f64 {
        match v {
            Variant::WithZeroOrder => self.value_with,
            Variant::WithoutZeroOrder => self.value_without,
            Variant::ZeroOrderOnly => self.zero_order,
        }
    }

    pub const CSV_HEADER: &'static str = "sample_index,T,L,R,xi,xi_prime,value_with,value_without,zero_order,seed";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.sample_index,
            self.massive,
            self.mask_radius,
            self.domain_radius,
            fmt_vec(&self.xi),
            fmt_vec(&self.xi_prime),
            self.value_with,
            self.value_without,
            self.zero_order,
            self.seed
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim().split(',').collect();
        if f.len() != 10 {
            return Err(Error::Format(format!("expected 10 columns, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Format(format!("{s:?}: {e}")));
        Ok(EnergyEstimate {
            sample_index: int(f[0])?,
            massive: num(f[1])?,
            mask_radius: num(f[2])?,
            domain_radius: num(f[3])?,
            xi: parse_vec(f[4])?,
            xi_prime: parse_vec(f[5])?,
            value_with: num(f[6])?,
            value_without: num(f[7])?,
            zero_order: num(f[8])?,
            seed: int(f[9])?,
        })
    }
}

fn fmt_vec(v: &Vector) -> String {
    format!("{};{};{}", v[0], v[1], v[2])
}

fn parse_vec(s: &str) -> Result<Vector> {
    let parts: Vec<f64> = s
        .split(';')
        .map(|p| p.parse::<f64>().map_err(|e| Error::Format(format!("{p:?}: {e}"))))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Format(format!("vector {s:?} needs three components")));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn check_pair(g: &crate::grid::Grid, phi: &CorrectorSolution, phi_adj: &CorrectorSolution, mask: &AveragingMask) -> Result<()> {
    g.ensure_same(&phi.phi.grid, "corrector and field grids differ")?;
    g.ensure_same(&phi_adj.phi.grid, "adjoint corrector and field grids differ")?;
    g.ensure_same(mask.grid(), "mask and domain grids differ")?;
    if phi.massive != phi_adj.massive {
        return Err(Error::param("corrector and adjoint corrector use different T"));
    }
    Ok(())
}

fn assemble(phi: &CorrectorSolution, phi_adj: &CorrectorSolution, mask: &AveragingMask, value_without: f64) -> EnergyEstimate {
    let m = 1.0 / phi.massive;
    let zero_order = mask.average_by(|idx| m * phi.phi.values[idx] * phi_adj.phi.values[idx]);
    EnergyEstimate {
        sample_index: 0,
        seed: 0,
        massive: phi.massive,
        mask_radius: mask.radius(),
        domain_radius: phi.domain_radius,
        xi: phi.xi,
        xi_prime: phi_adj.xi,
        value_with: value_without + zero_order,
        value_without,
        zero_order,
    }
}

/// Both estimator variants for one pair of solutions, with the energy
/// density integrated by the operator's own face and vertex quadrature.
///
/// `op` must be the operator the pair was solved with, in either
/// orientation; the energy is always that of the untransposed field.
pub fn energy_estimate(
    op: &Operator,
    phi: &CorrectorSolution,
    phi_adj: &CorrectorSolution,
    mask: &AveragingMask,
) -> Result<EnergyEstimate> {
    check_pair(op.grid(), phi, phi_adj, mask)?;
    if phi.transposed == phi_adj.transposed && !op.is_symmetric() {
        return Err(Error::param("second solution must solve the transposed equation"));
    }
    let eta = mask.values();
    let value_without = if op.is_transposed() {
        op.weighted_energy(&eta, &phi.xi, &phi.phi.values, &phi_adj.xi, &phi_adj.phi.values)
    } else {
        op.weighted_energy(&eta, &phi_adj.xi, &phi_adj.phi.values, &phi.xi, &phi.phi.values)
    };
    Ok(assemble(phi, phi_adj, mask, value_without))
}

/// Variant of [`energy_estimate`] evaluating `(ξ'+∇φ')·A(ξ+∇φ)` at cell
/// centers with gradients reconstructed from the two bounding faces.
pub fn energy_estimate_cell_centers(
    field: &CoefficientField,
    phi: &CorrectorSolution,
    phi_adj: &CorrectorSolution,
    mask: &AveragingMask,
) -> Result<EnergyEstimate> {
    check_pair(&field.grid, phi, phi_adj, mask)?;
    if phi.transposed == phi_adj.transposed && !field.is_symmetric() {
        return Err(Error::param("second solution must solve the transposed equation"));
    }
    let d = field.dim();
    let gp = cell_gradient(&phi.grad_phi);
    let ga = cell_gradient(&phi_adj.grad_phi);
    let (xi, xp) = (phi.xi, phi_adj.xi);
    let value_without = mask.average_by(|idx| {
        let mut u = xi;
        let mut v = xp;
        for i in 0..d {
            u[i] += gp[idx][i];
            v[i] += ga[idx][i];
        }
        tensor::bilinear(d, &v, &field.cells[idx], &u)
    });
    Ok(assemble(phi, phi_adj, mask, value_without))
}

/// Monte Carlo estimate of `ξ'·A_T ξ` with its jackknife interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    #[serde(rename = "T")]
    pub massive: f64,
    #[serde(rename = "L")]
    pub mask_radius: f64,
    #[serde(rename = "R")]
    pub domain_radius: f64,
    pub n_samples: usize,
    pub estimate: Estimate,
}

fn check_homogeneous(samples: &[EnergyEstimate]) -> Result<()> {
    let first = &samples[0];
    for s in samples {
        if s.massive != first.massive || s.mask_radius != first.mask_radius || s.domain_radius != first.domain_radius {
            return Err(Error::Heterogeneous(format!(
                "(T, L, R) = ({}, {}, {}) differs from ({}, {}, {})",
                s.massive, s.mask_radius, s.domain_radius, first.massive, first.mask_radius, first.domain_radius
            )));
        }
        if s.xi != first.xi || s.xi_prime != first.xi_prime {
            return Err(Error::Heterogeneous("directions differ between samples".into()));
        }
    }
    Ok(())
}

/// Sample mean of the chosen variant across realizations.
pub fn estimate_a_t_variant(samples: &[EnergyEstimate], variant: Variant) -> Result<CoefficientEstimate> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 samples, got {}", samples.len())));
    }
    check_homogeneous(samples)?;
    let v: Vec<f64> = samples.iter().map(|s| s.value(variant)).collect();
    Ok(CoefficientEstimate {
        massive: samples[0].massive,
        mask_radius: samples[0].mask_radius,
        domain_radius: samples[0].domain_radius,
        n_samples: v.len(),
        estimate: stats::jackknife_mean(&v)?,
    })
}

/// Sample mean of the estimator without the zero-order term.
pub fn estimate_a_t(samples: &[EnergyEstimate]) -> Result<CoefficientEstimate> {
    estimate_a_t_variant(samples, Variant::WithoutZeroOrder)
}

/// Weights `c_j` with `Σ c_j A_{2^j T₀}` cancelling `T⁻¹, …, T⁻ᵏ`.
pub fn richardson_weights(order: usize) -> Vec<f64> {
    // Neville tableau on unit vectors
    let n = order + 1;
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    for m in 1..=order {
        let f = (1u64 << m) as f64;
        rows = (0..rows.len() - 1)
            .map(|j| rows[j].iter().zip(&rows[j + 1]).map(|(lo, hi)| (f * hi - lo) / (f - 1.0)).collect())
            .collect();
    }
    rows.pop().unwrap()
}

fn check_dyadic(ts: &[f64]) -> Result<()> {
    for w in ts.windows(2) {
        if !((w[1] / w[0] - 2.0).abs() <= 1e-9) {
            return Err(Error::param(format!("T values {} and {} are not in dyadic progression", w[0], w[1])));
        }
    }
    Ok(())
}

/// Extrapolation from the `order + 1` largest dyadic `T` values; the
/// interval is propagated linearly assuming independent inputs.
pub fn richardson_extrapolate(values: &[(f64, Estimate)], order: usize) -> Result<Estimate> {
    if order == 0 {
        return Err(Error::param("extrapolation order must be at least 1"));
    }
    if values.len() < order + 1 {
        return Err(Error::InsufficientData(format!("order {order} needs {} values, got {}", order + 1, values.len())));
    }
    let ts: Vec<f64> = values.iter().map(|v| v.0).collect();
    check_dyadic(&ts)?;
    let tail = &values[values.len() - order - 1..];
    let w = richardson_weights(order);
    let value = w.iter().zip(tail).map(|(c, v)| c * v.1.value).sum();
    let se = w.iter().zip(tail).map(|(c, v)| (c * v.1.std_error).powi(2)).sum::<f64>().sqrt();
    Ok(Estimate::from_std_error(value, se))
}

/// `⟨|φ_T(0)|^q⟩^{1/q}` and `⟨(∫_{B_r} |∇φ_T|²)^{q/2}⟩^{1/q}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub q: f64,
    #[serde(rename = "T")]
    pub massive: f64,
    pub moment_phi: f64,
    pub moment_grad: f64,
    pub n_samples: usize,
    pub ci_phi: f64,
    pub ci_grad: f64,
}

/// Per-sample inputs to the moment functionals: the center value and the
/// gradient energy in the probe ball.
pub fn moment_observables(phi: &CorrectorSolution, probe_radius: f64) -> Result<(f64, f64)> {
    let g = &phi.phi.grid;
    if !(probe_radius > 0.0) || probe_radius > 0.5 * g.half_width() {
        return Err(Error::Geometry(format!(
            "probe radius {probe_radius} must lie in (0, {}] for this domain",
            0.5 * g.half_width()
        )));
    }
    let d = g.dim();
    let grads = cell_gradient(&phi.grad_phi);
    let energy: f64 = g
        .cells_in_ball(&g.midpoint()[..d], probe_radius)
        .into_iter()
        .map(|idx| grads[idx][..d].iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        * g.cell_volume();
    Ok((phi.phi.values[g.center_cell()], energy))
}

fn q_mean(v: &[f64], q: f64) -> f64 {
    let p: Vec<f64> = v.iter().map(|x| x.abs().powf(q)).collect();
    stats::mean(&p).powf(1.0 / q)
}

/// Moments from precomputed `(φ(0), ∫_{B_r}|∇φ|²)` pairs.
pub fn moments_from_observables(obs: &[(f64, f64)], q: f64, massive: f64) -> Result<MomentEstimate> {
    if !(q >= 1.0) {
        return Err(Error::param(format!("moment order must be at least 1, got {q}")));
    }
    if obs.len() < 2 {
        return Err(Error::InsufficientData("moments need at least 2 samples".into()));
    }
    let phi0: Vec<f64> = obs.iter().map(|o| o.0).collect();
    let grad: Vec<f64> = obs.iter().map(|o| o.1.max(0.0).sqrt()).collect();
    let jp = stats::jackknife(&phi0, |v| q_mean(v, q))?;
    let jg = stats::jackknife(&grad, |v| q_mean(v, q))?;
    Ok(MomentEstimate {
        q,
        massive,
        moment_phi: jp.value,
        moment_grad: jg.value,
        n_samples: obs.len(),
        ci_phi: jp.ci_half_width,
        ci_grad: jg.ci_half_width,
    })
}

pub fn corrector_moments(phis: &[CorrectorSolution], q: f64, probe_radius: f64) -> Result<MomentEstimate> {
    if phis.is_empty() {
        return Err(Error::InsufficientData("no solutions".into()));
    }
    let t = phis[0].massive;
    if phis.iter().any(|p| p.massive != t) {
        return Err(Error::Heterogeneous("solutions use different T".into()));
    }
    let obs: Vec<(f64, f64)> = phis.iter().map(|p| moment_observables(p, probe_radius)).collect::<Result<_>>()?;
    moments_from_observables(&obs, q, t)
}

/// `∫ |∇u|² η_L` with cell-reconstructed gradients.
pub fn masked_gradient_energy(u: &GridFunction, mask: &AveragingMask) -> Result<f64> {
    mask.grid().ensure_same(&u.grid, "mask and function grids differ")?;
    let d = u.grid.dim();
    let g = cell_gradient(&crate::grid::gradient(u));
    Ok(mask.average_by(|idx| g[idx][..d].iter().map(|x| x * x).sum()))
}

/// `Σ_faces ½(η_lo + η_hi) |∂u|² hᵈ` with `η = 0` outside the box, the
/// face quadrature of the solver.
pub fn masked_face_gradient_energy(u: &GridFunction, mask: &AveragingMask) -> Result<f64> {
    mask.grid().ensure_same(&u.grid, "mask and function grids differ")?;
    let g = &u.grid;
    let eta = mask.values();
    let grad = crate::grid::gradient(u);
    let shape = g.shape();
    let mut terms = Vec::new();
    for axis in 0..g.dim() {
        let fs = g.face_shape(axis);
        for k0 in 0..fs[0] {
            for k1 in 0..fs[1] {
                for k2 in 0..fs[2] {
                    let k = [k0, k1, k2];
                    let hi = if k[axis] < shape[axis] { eta[g.index(k)] } else { 0.0 };
                    let lo = if k[axis] > 0 {
                        let mut km = k;
                        km[axis] -= 1;
                        eta[g.index(km)]
                    } else {
                        0.0
                    };
                    if hi != 0.0 || lo != 0.0 {
                        terms.push(0.5 * (hi + lo) * grad.axes[axis][g.face_index(axis, k)].powi(2));
                    }
                }
            }
        }
    }
    Ok(stats::pairwise_sum(&terms) * g.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{realize_on_grid, EnsembleSpec};
    use crate::grid::Grid;
    use crate::solver::{solve_adjoint_corrector, solve_modified_corrector, OperatorSpec, SolverSettings};
    use crate::tensor::{identity, scaled_identity};

    const E1: Vector = [1.0, 0.0, 0.0];
    const E2: Vector = [0.0, 1.0, 0.0];

    fn estimate(field: &CoefficientField, t: f64, l: f64, xi: &Vector, xp: &Vector) -> EnergyEstimate {
        let spec = OperatorSpec::new(field, t);
        let st = SolverSettings::default();
        let p = solve_modified_corrector(&spec, xi, &st).unwrap();
        let a = solve_adjoint_corrector(&spec, xp, &st).unwrap();
        let mask = AveragingMask::new(&field.grid, l).unwrap();
        let op = Operator::new(&spec, st.face_averaging).unwrap();
        let e = energy_estimate(&op, &p, &a, &mask).unwrap();
        let adj = Operator::new(&spec.adjoint(), st.face_averaging).unwrap();
        let e2 = energy_estimate(&adj, &p, &a, &mask).unwrap();
        assert!((e.value_without - e2.value_without).abs() <= 1e-12);
        e
    }

    #[test]
    fn constant_field_is_exact() {
        let g = Grid::centered(2, 8.0, 0.25).unwrap();
        let mut a = scaled_identity(2, 0.6);
        a[0][1] = 0.15;
        a[1][0] = 0.05;
        let f = CoefficientField::constant(&g, a);
        for xi in [E1, E2] {
            for xp in [E1, E2] {
                let e = estimate(&f, 10.0, 4.0, &xi, &xp);
                let exact = tensor::bilinear(2, &xp, &a, &xi);
                assert!((e.value_without - exact).abs() < 1e-12);
                assert_eq!(e.zero_order, 0.0);
                assert_eq!(e.value_with, e.value_without + e.zero_order);
            }
        }
    }

    #[test]
    fn poisson_sample_bracket_and_identity() {
        let g = Grid::centered(2, 16.0, 0.25).unwrap();
        let f = realize_on_grid(&EnsembleSpec::poisson(2, 0.25, 4), &g, 0).unwrap();
        for xi in [E1, E2] {
            let e = estimate(&f, 16.0, 4.0, &xi, &xi);
            assert!(e.value_without >= 0.25 && e.value_without <= 1.05, "{}", e.value_without);
            assert_eq!(e.value_with, e.value_without + e.zero_order);
            assert!(e.zero_order >= 0.0);
        }
    }

    #[test]
    fn bilinear_in_directions() {
        let g = Grid::centered(2, 10.0, 0.25).unwrap();
        let f = realize_on_grid(&EnsembleSpec::poisson(2, 0.25, 9), &g, 1).unwrap();
        let st = SolverSettings::with_tol(1e-11);
        let op = Operator::new(&OperatorSpec::new(&f, 8.0), st.face_averaging).unwrap();
        let mask = AveragingMask::new(&g, 5.0).unwrap();
        let s1 = op.solve_corrector(&E1, &st, None).unwrap();
        let s2 = op.solve_corrector(&E2, &st, None).unwrap();
        let s12 = op.solve_corrector(&[1.0, 1.0, 0.0], &st, None).unwrap();
        let v = |a: &CorrectorSolution, b: &CorrectorSolution| energy_estimate(&op, a, b, &mask).unwrap().value_with;
        let lhs = v(&s12, &s1);
        let rhs = v(&s1, &s1) + v(&s2, &s1);
        assert!((lhs - rhs).abs() < 1e-8 * rhs.abs(), "{lhs} {rhs}");
    }

    #[test]
    fn cell_center_variant_agrees_on_constant_fields() {
        let g = Grid::centered(2, 6.0, 0.25).unwrap();
        let f = CoefficientField::constant(&g, scaled_identity(2, 0.4));
        let spec = OperatorSpec::new(&f, 4.0);
        let st = SolverSettings::default();
        let p = solve_modified_corrector(&spec, &E2, &st).unwrap();
        let mask = AveragingMask::new(&g, 3.0).unwrap();
        let e = energy_estimate_cell_centers(&f, &p, &p, &mask).unwrap();
        assert!((e.value_without - 0.4).abs() < 1e-12);
    }

    fn sample(v: f64) -> EnergyEstimate {
        EnergyEstimate {
            sample_index: 0,
            seed: 1,
            massive: 8.0,
            mask_radius: 4.0,
            domain_radius: 12.0,
            xi: E1,
            xi_prime: E1,
            value_with: v,
            value_without: v,
            zero_order: 0.0,
        }
    }

    #[test]
    fn aggregation() {
        let e = estimate_a_t(&[sample(0.5), sample(0.5), sample(0.5)]).unwrap();
        assert_eq!(e.estimate.value, 0.5);
        assert_eq!(e.estimate.ci_half_width, 0.0);
        let e = estimate_a_t(&[sample(0.3), sample(0.7)]).unwrap();
        assert!((e.estimate.value - 0.5).abs() < 1e-15);
        assert!((e.estimate.std_error.powi(2) - 0.16 / 4.0).abs() < 1e-15);
        let mut other = sample(0.4);
        other.massive = 16.0;
        assert!(matches!(estimate_a_t(&[sample(0.3), other]), Err(Error::Heterogeneous(_))));
        assert!(estimate_a_t(&[sample(0.3)]).is_err());
    }

    #[test]
    fn richardson_exactness() {
        let a = |t: f64| 0.37 + 3.0 / t;
        let v: Vec<(f64, Estimate)> = [64.0, 128.0].iter().map(|&t| (t, Estimate::exact(a(t)))).collect();
        assert!((richardson_extrapolate(&v, 1).unwrap().value - 0.37).abs() < 1e-14);
        let b = |t: f64| 0.37 + 3.0 / t - 40.0 / (t * t);
        let v: Vec<(f64, Estimate)> = [16.0, 32.0, 64.0].iter().map(|&t| (t, Estimate::exact(b(t)))).collect();
        assert!((richardson_extrapolate(&v, 2).unwrap().value - 0.37).abs() < 1e-14);
        let w = richardson_weights(2);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] + 2.0).abs() < 1e-15 && (w[2] - 8.0 / 3.0).abs() < 1e-15);
        let c = |t: f64| 1.0 + 1.0 / t + 1.0 / t.powi(2) + 1.0 / t.powi(3);
        let v: Vec<(f64, Estimate)> = [4.0, 8.0, 16.0, 32.0].iter().map(|&t| (t, Estimate::exact(c(t)))).collect();
        assert!((richardson_extrapolate(&v, 3).unwrap().value - 1.0).abs() < 1e-12);
        let bad = vec![(16.0, Estimate::exact(1.0)), (48.0, Estimate::exact(1.0))];
        assert!(richardson_extrapolate(&bad, 1).is_err());
        assert!(richardson_extrapolate(&v[..2], 2).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut s = sample(0.123456789012345);
        s.zero_order = 1e-7;
        s.xi_prime = [0.6, 0.8, 0.0];
        let back = EnergyEstimate::from_csv_row(&s.to_csv_row()).unwrap();
        assert_eq!(back, s);
        assert_eq!(EnergyEstimate::CSV_HEADER.split(',').count(), 10);
        assert!(EnergyEstimate::from_csv_row("1,2,3").is_err());
    }

    #[test]
    fn moments() {
        let obs = vec![(0.5, 1.0), (-1.0, 4.0), (2.0, 0.25), (0.1, 1.0)];
        let m1 = moments_from_observables(&obs, 1.0, 8.0).unwrap();
        let m2 = moments_from_observables(&obs, 2.0, 8.0).unwrap();
        let m4 = moments_from_observables(&obs, 4.0, 8.0).unwrap();
        let rms = ((0.25 + 1.0 + 4.0 + 0.01) / 4.0f64).sqrt();
        assert!((m2.moment_phi - rms).abs() < 1e-15);
        assert!(m1.moment_phi <= m2.moment_phi && m2.moment_phi <= m4.moment_phi);
        assert!(m1.moment_grad <= m2.moment_grad && m2.moment_grad <= m4.moment_grad);

        let g = Grid::centered(2, 8.0, 0.25).unwrap();
        let f = CoefficientField::constant(&g, identity(2));
        let p = solve_modified_corrector(&OperatorSpec::new(&f, 8.0), &E1, &SolverSettings::default()).unwrap();
        let m = corrector_moments(&[p.clone(), p.clone()], 2.0, 2.0).unwrap();
        assert_eq!((m.moment_phi, m.moment_grad), (0.0, 0.0));
        assert!(matches!(corrector_moments(&[p], 2.0, 6.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn face_gradient_energy_of_linear_profile() {
        let g = Grid::centered(2, 6.0, 0.25).unwrap();
        let mask = AveragingMask::new(&g, 4.0).unwrap();
        let u = GridFunction::from_fn(&g, |x| 3.0 * x[0] - x[1]);
        let e = masked_face_gradient_energy(&u, &mask).unwrap();
        assert!((e - 10.0).abs() < 1e-12, "{e}");
        let other = Grid::centered(2, 6.0, 0.5).unwrap();
        assert!(masked_face_gradient_energy(&GridFunction::zeros(&other), &mask).is_err());
    }
}
