//! Structured-grid containers and discrete calculus.
//!
//! Cells are indexed row-major (last axis fastest). A grid of dimension
//! `d < 3` pads its shape with ones so that every loop can run over three
//! axes. Unknowns live at cell centers; gradients and fluxes live on faces.
//! Outside the box every grid function is taken to vanish (homogeneous
//! Dirichlet ghost value).

pub mod io;
mod mask;

pub use mask::AveragingMask;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor, Vector};

/// Axis-aligned box in length units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub dim: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl BoxDomain {
    pub fn new(dim: usize, lower: &[f64], upper: &[f64]) -> Result<Self> {
        check_dim(dim)?;
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::param("box corner length differs from dimension"));
        }
        let mut b = BoxDomain { dim, lower: [0.0; 3], upper: [0.0; 3] };
        b.lower[..dim].copy_from_slice(lower);
        b.upper[..dim].copy_from_slice(upper);
        if !b.is_finite() {
            return Err(Error::param("box corners must be finite"));
        }
        if (0..dim).any(|i| b.upper[i] < b.lower[i]) {
            return Err(Error::param("box upper corner below lower corner"));
        }
        Ok(b)
    }

    /// `[-half, half]^d`
    pub fn cube(dim: usize, half: f64) -> Result<Self> {
        let lo = vec![-half; dim];
        let hi = vec![half; dim];
        Self::new(dim, &lo, &hi)
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| self.lower[i].is_finite() && self.upper[i].is_finite())
    }

    pub fn edge(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.edge(i)).product()
    }

    pub fn expanded(&self, margin: f64) -> BoxDomain {
        let mut b = self.clone();
        for i in 0..self.dim {
            b.lower[i] -= margin;
            b.upper[i] += margin;
        }
        b
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::param(format!("dimension must be 1, 2 or 3, got {dim}")))
    }
}

/// Uniform cell-centered grid on a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    shape: [usize; 3],
    spacing: f64,
    lower: [f64; 3],
}

impl Grid {
    /// Grid on `domain`; the spacing must divide every edge length.
    pub fn new(domain: &BoxDomain, spacing: f64) -> Result<Self> {
        check_dim(domain.dim)?;
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::param("spacing must be positive and finite"));
        }
        let mut shape = [1usize; 3];
        for (i, n) in shape.iter_mut().enumerate().take(domain.dim) {
            let cells = domain.edge(i) / spacing;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-9 * cells.max(1.0) || rounded < 1.0 {
                return Err(Error::param(format!(
                    "spacing {spacing} does not divide edge {} along axis {i}",
                    domain.edge(i)
                )));
            }
            *n = rounded as usize;
        }
        Ok(Grid { dim: domain.dim, shape, spacing, lower: domain.lower })
    }

    /// Cube centred at the origin with an odd number of cells per axis, so
    /// that the origin is a cell center; the half-width is the smallest
    /// admissible value `≥ radius`.
    pub fn centered(dim: usize, radius: f64, spacing: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && spacing > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius and spacing must be positive"));
        }
        let half_cells = (radius / spacing - 0.5 - 1e-9).ceil().max(0.0) as usize;
        let n = 2 * half_cells + 1;
        let half = 0.5 * n as f64 * spacing;
        let mut shape = [1usize; 3];
        let mut lower = [0.0; 3];
        for i in 0..dim {
            shape[i] = n;
            lower[i] = -half;
        }
        Ok(Grid { dim, shape, spacing, lower })
    }

    pub fn from_parts(dim: usize, shape: [usize; 3], spacing: f64, lower: [f64; 3]) -> Result<Self> {
        check_dim(dim)?;
        if (0..3).any(|i| shape[i] == 0 || (i >= dim && shape[i] != 1)) {
            return Err(Error::param("invalid grid shape"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::param("spacing must be positive and finite"));
        }
        Ok(Grid { dim, shape, spacing, lower })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn lower(&self) -> [f64; 3] {
        self.lower
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn domain(&self) -> BoxDomain {
        let mut upper = [0.0; 3];
        for i in 0..self.dim {
            upper[i] = self.lower[i] + self.shape[i] as f64 * self.spacing;
        }
        BoxDomain { dim: self.dim, lower: self.lower, upper }
    }

    /// Index stride of `axis` in the flat array.
    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn index(&self, k: [usize; 3]) -> usize {
        (k[0] * self.shape[1] + k[1]) * self.shape[2] + k[2]
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let k2 = idx % self.shape[2];
        let rest = idx / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], k2]
    }

    pub fn center(&self, idx: usize) -> Vector {
        let k = self.multi_index(idx);
        let mut x = [0.0; 3];
        for i in 0..self.dim {
            x[i] = self.lower[i] + (k[i] as f64 + 0.5) * self.spacing;
        }
        x
    }

    /// Cell whose closed region contains `x`, if inside the box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut k = [0usize; 3];
        for i in 0..self.dim {
            let s = ((x[i] - self.lower[i]) / self.spacing).floor();
            if s < -1e-12 || s > self.shape[i] as f64 {
                return None;
            }
            k[i] = (s.max(0.0) as usize).min(self.shape[i] - 1);
        }
        Some(self.index(k))
    }

    /// Cell containing the box midpoint (the origin for centred grids).
    pub fn center_cell(&self) -> usize {
        let mut k = [0usize; 3];
        for i in 0..self.dim {
            k[i] = self.shape[i] / 2;
        }
        self.index(k)
    }

    /// Smallest distance from the box midpoint to the boundary.
    pub fn half_width(&self) -> f64 {
        (0..self.dim)
            .map(|i| 0.5 * self.shape[i] as f64 * self.spacing)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn midpoint(&self) -> Vector {
        let mut m = [0.0; 3];
        for i in 0..self.dim {
            m[i] = self.lower[i] + 0.5 * self.shape[i] as f64 * self.spacing;
        }
        m
    }

    /// Shape of the face array normal to `axis` (one extra face along it).
    pub fn face_shape(&self, axis: usize) -> [usize; 3] {
        let mut s = self.shape;
        s[axis] += 1;
        s
    }

    pub fn face_len(&self, axis: usize) -> usize {
        self.face_shape(axis).iter().product()
    }

    /// Face between cell `k - e_axis` and cell `k`; `k[axis]` runs over
    /// `0..=n[axis]`.
    pub fn face_index(&self, axis: usize, k: [usize; 3]) -> usize {
        let s = self.face_shape(axis);
        (k[0] * s[1] + k[1]) * s[2] + k[2]
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.shape == other.shape
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
            && (0..3).all(|i| (self.lower[i] - other.lower[i]).abs() <= 1e-9 * self.spacing.max(1.0))
    }

    pub(crate) fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(what.to_string()))
        }
    }

    /// Cells whose centers satisfy `|x - c| < radius`.
    pub fn cells_in_ball(&self, c: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut lo = [0usize; 3];
        let mut hi = [1usize; 3];
        for i in 0..self.dim {
            let a = ((c[i] - radius - self.lower[i]) / self.spacing - 0.5).floor().max(0.0) as usize;
            let b = ((c[i] + radius - self.lower[i]) / self.spacing + 0.5).ceil().max(0.0) as usize;
            lo[i] = a.min(self.shape[i]);
            hi[i] = b.min(self.shape[i]);
        }
        let r2 = radius * radius;
        for k0 in lo[0]..hi[0] {
            for k1 in lo[1]..hi[1] {
                for k2 in lo[2]..hi[2] {
                    let idx = self.index([k0, k1, k2]);
                    let x = self.center(idx);
                    let d2: f64 = (0..self.dim).map(|i| (x[i] - c[i]).powi(2)).sum();
                    if d2 < r2 {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }
}

/// Scalar unknowns at cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Grid) -> Self {
        GridFunction { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("grid function values must be finite"));
        }
        Ok(GridFunction { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Vector) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        GridFunction { grid: grid.clone(), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Σ u v hᵈ`
    pub fn inner(&self, other: &GridFunction) -> f64 {
        self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// Face-centred values, one array per axis; the array for axis `i` has
/// `n_i + 1` entries along axis `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub grid: Grid,
    pub axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: &Grid) -> Self {
        let axes = (0..grid.dim()).map(|a| vec![0.0; grid.face_len(a)]).collect();
        FaceField { grid: grid.clone(), axes }
    }

    pub fn constant(grid: &Grid, c: &Vector) -> Self {
        let axes = (0..grid.dim()).map(|a| vec![c[a]; grid.face_len(a)]).collect();
        FaceField { grid: grid.clone(), axes }
    }

    /// `Σ_faces f g hᵈ`
    pub fn inner(&self, other: &FaceField) -> f64 {
        let vol = self.grid.cell_volume();
        self.axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            * vol
    }
}

/// Face differences `(u_k − u_{k−e_i}) / h` with ghost value 0 outside.
pub fn gradient(u: &GridFunction) -> FaceField {
    let g = &u.grid;
    let h = g.spacing();
    let mut out = FaceField::zeros(g);
    for axis in 0..g.dim() {
        let fs = g.face_shape(axis);
        let face = &mut out.axes[axis];
        for k0 in 0..fs[0] {
            for k1 in 0..fs[1] {
                for k2 in 0..fs[2] {
                    let k = [k0, k1, k2];
                    let hi = if k[axis] < g.shape()[axis] { u.values[g.index(k)] } else { 0.0 };
                    let lo = if k[axis] > 0 {
                        let mut km = k;
                        km[axis] -= 1;
                        u.values[g.index(km)]
                    } else {
                        0.0
                    };
                    face[g.face_index(axis, k)] = (hi - lo) / h;
                }
            }
        }
    }
    out
}

/// `Σ_i (v_{i,k+½} − v_{i,k−½}) / h`
pub fn divergence(v: &FaceField) -> GridFunction {
    let g = &v.grid;
    let h = g.spacing();
    let mut out = GridFunction::zeros(g);
    for idx in 0..g.len() {
        let k = g.multi_index(idx);
        let mut acc = 0.0;
        for axis in 0..g.dim() {
            let mut kp = k;
            kp[axis] += 1;
            acc += v.axes[axis][g.face_index(axis, kp)] - v.axes[axis][g.face_index(axis, k)];
        }
        out.values[idx] = acc / h;
    }
    out
}

/// Per-cell vectors obtained by averaging the two bounding faces per axis.
pub fn cell_gradient(f: &FaceField) -> Vec<Vector> {
    let g = &f.grid;
    (0..g.len())
        .map(|idx| {
            let k = g.multi_index(idx);
            let mut v = [0.0; 3];
            for axis in 0..g.dim() {
                let mut kp = k;
                kp[axis] += 1;
                v[axis] = 0.5 * (f.axes[axis][g.face_index(axis, k)] + f.axes[axis][g.face_index(axis, kp)]);
            }
            v
        })
        .collect()
}

/// `Σ w η_L hᵈ`
pub fn masked_average(w: &GridFunction, mask: &AveragingMask) -> Result<f64> {
    mask.grid().ensure_same(&w.grid, "mask and function live on different grids")?;
    Ok(mask.average_values(&w.values))
}

/// Per-cell d×d tensors with the admissibility constants they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub grid: Grid,
    pub cells: Vec<Tensor>,
}

impl CoefficientField {
    pub fn constant(grid: &Grid, a: Tensor) -> Self {
        CoefficientField { grid: grid.clone(), cells: vec![a; grid.len()] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Vector) -> Tensor) -> Self {
        let cells = (0..grid.len()).map(|i| f(&grid.center(i))).collect();
        CoefficientField { grid: grid.clone(), cells }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Pointwise transpose (the adjoint field).
    pub fn transposed(&self) -> Self {
        CoefficientField { grid: self.grid.clone(), cells: self.cells.iter().map(tensor::transpose).collect() }
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim();
        self.cells.iter().all(|a| tensor::is_symmetric(d, a))
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        !self.cells.iter().any(|a| tensor::has_off_diagonal(d, a))
    }

    /// Checks `|A ξ| ≤ |ξ|` and `ξ·Aξ ≥ λ|ξ|²` in every cell.
    pub fn check_ellipticity(&self, lambda: f64) -> Result<()> {
        let d = self.dim();
        for (cell, a) in self.cells.iter().enumerate() {
            tensor::check_admissible(d, a, lambda).map_err(|reason| Error::NotElliptic { cell, reason })?;
        }
        Ok(())
    }

    /// Largest `λ` for which every cell is admissible (smallest eigenvalue
    /// of the symmetric parts).
    pub fn ellipticity(&self) -> f64 {
        let d = self.dim();
        self.cells.iter().map(|a| tensor::symmetric_eigenvalues(d, a)[0]).fold(f64::INFINITY, f64::min)
    }

    /// The `(i, j)` entry as a grid function.
    pub fn component(&self, i: usize, j: usize) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.cells.iter().map(|a| a[i][j]).collect() }
    }

    /// Stable content hash (FNV-1a over the raw little-endian bytes).
    pub fn content_hash(&self) -> u64 {
        let d = self.dim();
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.grid.spacing());
        for a in &self.cells {
            for row in a.iter().take(d) {
                for &v in row.iter().take(d) {
                    eat(v);
                }
            }
        }
        h
    }
}
