//! Random coefficient laws and reproducible sampling.
//!
//! All randomness is counter based: the generator for a unit lattice cell
//! `c ∈ ℤᵈ` of sample `k` is seeded with `hash(master_seed, k, stream, c)`.
//! A realization therefore does not depend on the box it is evaluated on
//! (fields on nested boxes agree on the overlap), on evaluation order, or
//! on how samples are distributed over workers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, CoefficientField, Grid};
use crate::stats;
use crate::tensor::{self, Tensor, Vector};

const STREAM_POINTS: u64 = 0x504f_494e_5453;
const STREAM_CELLS: u64 = 0x4345_4c4c_53;

/// Upper bound on expected points / lattice cells touched by one request.
pub(crate) const RESOURCE_LIMIT: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// `λ·Id` on the union of balls around Poisson points, `Id` elsewhere.
    PoissonInclusion,
    /// iid tensor per unit lattice cell.
    IidCheckerboard,
    ConstantMatrix,
    /// Bands of fixed width normal to `x₁`, cycling through `cell_values`.
    Laminate,
}

/// A candidate tensor (row-major `d×d`) and its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellValue {
    pub tensor: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub probability: f64,
}

fn one() -> f64 {
    1.0
}

impl CellValue {
    pub fn scalar(dim: usize, s: f64, probability: f64) -> Self {
        CellValue { tensor: to_rows(dim, &tensor::scaled_identity(dim, s)), probability }
    }

    pub fn from_tensor(dim: usize, a: &Tensor, probability: f64) -> Self {
        CellValue { tensor: to_rows(dim, a), probability }
    }
}

fn to_rows(dim: usize, a: &Tensor) -> Vec<Vec<f64>> {
    (0..dim).map(|i| a[i][..dim].to_vec()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub dimension: usize,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default = "one")]
    pub inclusion_radius: f64,
    #[serde(default = "one")]
    pub intensity: f64,
    /// Checkerboard draws, the constant tensor, or the laminate bands. When
    /// empty, `{λ·Id, Id}` with equal weights is used (`Id` for constants).
    #[serde(default)]
    pub cell_values: Vec<CellValue>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub band_width: f64,
}

fn default_contrast() -> f64 {
    0.25
}

impl EnsembleSpec {
    fn base(kind: EnsembleKind, dimension: usize) -> Self {
        EnsembleSpec {
            kind,
            dimension,
            contrast: default_contrast(),
            inclusion_radius: 1.0,
            intensity: 1.0,
            cell_values: Vec::new(),
            master_seed: 0,
            band_width: 1.0,
        }
    }

    pub fn poisson(dimension: usize, contrast: f64, master_seed: u64) -> Self {
        EnsembleSpec { contrast, master_seed, ..Self::base(EnsembleKind::PoissonInclusion, dimension) }
    }

    pub fn checkerboard(dimension: usize, contrast: f64, values: Vec<CellValue>, master_seed: u64) -> Self {
        EnsembleSpec { contrast, master_seed, cell_values: values, ..Self::base(EnsembleKind::IidCheckerboard, dimension) }
    }

    pub fn constant(dimension: usize, a: &Tensor) -> Self {
        let ell = tensor::symmetric_eigenvalues(dimension, a)[0].clamp(f64::MIN_POSITIVE, 1.0);
        EnsembleSpec {
            contrast: ell,
            cell_values: vec![CellValue::from_tensor(dimension, a, 1.0)],
            ..Self::base(EnsembleKind::ConstantMatrix, dimension)
        }
    }

    pub fn laminate(dimension: usize, contrast: f64, values: &[f64]) -> Self {
        EnsembleSpec {
            contrast,
            cell_values: values.iter().map(|&s| CellValue::scalar(dimension, s, 1.0)).collect(),
            ..Self::base(EnsembleKind::Laminate, dimension)
        }
    }

    /// Candidate tensors after applying defaults.
    pub fn candidates(&self) -> Result<Vec<(Tensor, f64)>> {
        let d = self.dimension;
        if self.cell_values.is_empty() {
            return Ok(match self.kind {
                EnsembleKind::ConstantMatrix => vec![(tensor::identity(d), 1.0)],
                _ => vec![(tensor::scaled_identity(d, self.contrast), 0.5), (tensor::identity(d), 0.5)],
            });
        }
        self.cell_values
            .iter()
            .map(|cv| {
                if cv.tensor.len() != d || cv.tensor.iter().any(|r| r.len() != d) {
                    return Err(Error::param(format!("cell value must be a {d}×{d} matrix")));
                }
                let mut a = tensor::ZERO;
                for i in 0..d {
                    a[i][..d].copy_from_slice(&cv.tensor[i]);
                }
                Ok((a, cv.probability))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if !(1..=3).contains(&d) {
            return Err(Error::param(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::param(format!("contrast must lie in (0, 1], got {}", self.contrast)));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::param(format!("intensity must be positive, got {}", self.intensity)));
        }
        if !(self.inclusion_radius > 0.0 && self.inclusion_radius.is_finite()) {
            return Err(Error::param(format!("inclusion radius must be positive, got {}", self.inclusion_radius)));
        }
        if !(self.band_width > 0.0 && self.band_width.is_finite()) {
            return Err(Error::param(format!("band width must be positive, got {}", self.band_width)));
        }
        if self.kind == EnsembleKind::PoissonInclusion {
            return Ok(());
        }
        let cands = self.candidates()?;
        for (cell, (a, p)) in cands.iter().enumerate() {
            tensor::check_admissible(d, a, self.contrast).map_err(|reason| Error::NotElliptic { cell, reason })?;
            if !(*p >= 0.0 && p.is_finite()) {
                return Err(Error::param(format!("probability {p} is not valid")));
            }
        }
        if self.kind == EnsembleKind::IidCheckerboard {
            let total: f64 = cands.iter().map(|c| c.1).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("cell value probabilities sum to {total}, not 1")));
            }
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream seed for `(master_seed, sample_index, stream, lattice cell)`.
pub fn derive_seed(master_seed: u64, sample_index: u64, stream: u64, cell: &[i64]) -> u64 {
    let mut h = splitmix(master_seed);
    h = splitmix(h ^ sample_index);
    h = splitmix(h ^ stream);
    for &c in cell {
        h = splitmix(h ^ c as u64);
    }
    h
}

/// Poisson points relevant to a target box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub points: Vec<Vector>,
    pub extended_box: BoxDomain,
}

fn lattice_range(lo: f64, hi: f64) -> std::ops::Range<i64> {
    (lo.floor() as i64)..(hi.ceil() as i64).max(lo.floor() as i64 + 1)
}

/// Samples the point process on `box` extended by one inclusion radius.
pub fn sample_poisson_points(spec: &EnsembleSpec, domain: &BoxDomain, sample_index: u64) -> Result<PointConfiguration> {
    if spec.kind != EnsembleKind::PoissonInclusion {
        return Err(Error::param("point sampling requires a Poisson inclusion ensemble"));
    }
    spec.validate()?;
    if domain.dim != spec.dimension {
        return Err(Error::GridMismatch(format!("box has dimension {}, ensemble {}", domain.dim, spec.dimension)));
    }
    if !domain.is_finite() {
        return Err(Error::param("sampling box must be finite"));
    }
    if domain.volume() == 0.0 {
        return Ok(PointConfiguration { points: Vec::new(), extended_box: domain.clone() });
    }
    let ext = domain.expanded(spec.inclusion_radius);
    let d = spec.dimension;
    let expected = spec.intensity * ext.volume();
    let mut ranges = [0..1, 0..1, 0..1];
    for i in 0..d {
        ranges[i] = lattice_range(ext.lower[i], ext.upper[i]);
    }
    let lattice: f64 = ranges.iter().map(|r| r.clone().count() as f64).product();
    if expected > RESOURCE_LIMIT || lattice > RESOURCE_LIMIT {
        return Err(Error::ResourceGuard(format!("expected {expected:.3e} points over {lattice:.3e} lattice cells")));
    }
    let law = Poisson::new(spec.intensity).map_err(|e| Error::param(e.to_string()))?;
    let mut points = Vec::new();
    for c0 in ranges[0].clone() {
        for c1 in ranges[1].clone() {
            for c2 in ranges[2].clone() {
                let c = [c0, c1, c2];
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, sample_index, STREAM_POINTS, &c[..d]));
                let count = law.sample(&mut rng) as usize;
                for _ in 0..count {
                    let mut x = [0.0; 3];
                    for i in 0..d {
                        x[i] = c[i] as f64 + rng.random::<f64>();
                    }
                    if ext.contains(&x[..d]) {
                        points.push(x);
                    }
                }
            }
        }
    }
    Ok(PointConfiguration { points, extended_box: ext })
}

/// `λ·Id` on cells whose centers lie in some open ball `B(x_n, r)`.
pub fn field_from_points(spec: &EnsembleSpec, grid: &Grid, points: &[Vector]) -> CoefficientField {
    let d = spec.dimension;
    let mut field = CoefficientField::constant(grid, tensor::identity(d));
    let inside = tensor::scaled_identity(d, spec.contrast);
    for p in points {
        for idx in grid.cells_in_ball(&p[..d], spec.inclusion_radius) {
            field.cells[idx] = inside;
        }
    }
    field
}

/// Realization on `box` discretized with `spacing`.
pub fn realize_field(spec: &EnsembleSpec, domain: &BoxDomain, spacing: f64, sample_index: u64) -> Result<CoefficientField> {
    let grid = Grid::new(domain, spacing)?;
    realize_on_grid(spec, &grid, sample_index)
}

/// Realization on an existing grid.
pub fn realize_on_grid(spec: &EnsembleSpec, grid: &Grid, sample_index: u64) -> Result<CoefficientField> {
    spec.validate()?;
    let d = spec.dimension;
    if grid.dim() != d {
        return Err(Error::GridMismatch(format!("grid has dimension {}, ensemble {d}", grid.dim())));
    }
    match spec.kind {
        EnsembleKind::PoissonInclusion => {
            if grid.spacing() > 0.5 * spec.inclusion_radius + 1e-12 {
                return Err(Error::param(format!(
                    "spacing {} exceeds half the inclusion radius {}",
                    grid.spacing(),
                    spec.inclusion_radius
                )));
            }
            let pc = sample_poisson_points(spec, &grid.domain(), sample_index)?;
            Ok(field_from_points(spec, grid, &pc.points))
        }
        EnsembleKind::ConstantMatrix => Ok(CoefficientField::constant(grid, spec.candidates()?[0].0)),
        EnsembleKind::Laminate => {
            let cands = spec.candidates()?;
            let m = cands.len() as f64;
            Ok(CoefficientField::from_fn(grid, |x| {
                let band = (x[0] / spec.band_width).floor().rem_euclid(m) as usize;
                cands[band].0
            }))
        }
        EnsembleKind::IidCheckerboard => {
            let cands = spec.candidates()?;
            let mut cache: HashMap<[i64; 3], Tensor> = HashMap::new();
            let cells = (0..grid.len())
                .map(|idx| {
                    let x = grid.center(idx);
                    let mut c = [0i64; 3];
                    for i in 0..d {
                        c[i] = x[i].floor() as i64;
                    }
                    *cache.entry(c).or_insert_with(|| checker_value(spec, &cands, sample_index, &c[..d]))
                })
                .collect();
            Ok(CoefficientField { grid: grid.clone(), cells })
        }
    }
}

fn checker_value(spec: &EnsembleSpec, cands: &[(Tensor, f64)], sample_index: u64, cell: &[i64]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, sample_index, STREAM_CELLS, cell));
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, p) in cands {
        acc += p;
        if u < acc {
            return *a;
        }
    }
    cands.last().unwrap().0
}

/// Field value at a single point, consistent with every grid realization
/// whose cell center is `x`.
pub fn coefficient_at(spec: &EnsembleSpec, sample_index: u64, x: &[f64]) -> Result<Tensor> {
    let d = spec.dimension;
    let pad = 1e-9;
    let lower: Vec<f64> = x[..d].iter().map(|v| v - pad).collect();
    let upper: Vec<f64> = x[..d].iter().map(|v| v + pad).collect();
    let b = BoxDomain::new(d, &lower, &upper)?;
    let grid = Grid::from_parts(d, [1, 1, 1], 2.0 * pad, b.lower)?;
    match spec.kind {
        EnsembleKind::PoissonInclusion => {
            let pc = sample_poisson_points(spec, &b, sample_index)?;
            let r2 = spec.inclusion_radius * spec.inclusion_radius;
            let hit = pc.points.iter().any(|p| (0..d).map(|i| (p[i] - x[i]).powi(2)).sum::<f64>() < r2);
            Ok(if hit { tensor::scaled_identity(d, spec.contrast) } else { tensor::identity(d) })
        }
        _ => Ok(realize_on_grid(spec, &grid, sample_index)?.cells[0]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub n_samples: usize,
    pub shift: [i64; 3],
    pub ks_statistic: f64,
    pub p_value: f64,
    pub passed: bool,
}

/// Two-sample KS test between the laws of `A₁₁(x₀)` and `A₁₁(x₀ + shift)`.
///
/// The two samples use disjoint sample indices so that they are independent.
pub fn empirical_stationarity_check(spec: &EnsembleSpec, n_samples: usize, shift: [i64; 3]) -> Result<StationarityReport> {
    if n_samples < 100 {
        return Err(Error::InsufficientData(format!("stationarity check needs at least 100 samples, got {n_samples}")));
    }
    spec.validate()?;
    let d = spec.dimension;
    let x0: Vector = [0.3125, 0.6875, 0.1875];
    let mut x1 = x0;
    for i in 0..d {
        x1[i] += shift[i] as f64;
    }
    let n = n_samples as u64;
    let a: Vec<f64> = (0..n).map(|k| coefficient_at(spec, k, &x0[..d]).map(|t| t[0][0])).collect::<Result<_>>()?;
    let b: Vec<f64> = (n..2 * n).map(|k| coefficient_at(spec, k, &x1[..d]).map(|t| t[0][0])).collect::<Result<_>>()?;
    let (ks_statistic, p_value) = stats::ks_two_sample(&a, &b);
    Ok(StationarityReport { n_samples, shift, ks_statistic, p_value, passed: p_value > 0.01 })
}
