//! Matrix-free finite-volume discretization of `T⁻¹u − ∇·A∇u` on a box
//! with homogeneous Dirichlet data, and the Krylov solves built on it.
//!
//! The operator is scaled per unit volume: for `A ≡ Id`, `T = ∞`, `h = 1`
//! it is the standard `2d+1` point Laplacian. Outside the box the unknown is
//! taken to vanish at the ghost cell centers, which matches
//! [`grid::gradient`](crate::grid::gradient).
//!
//! Diagonal tensor entries enter through two-point face fluxes. The face
//! coefficient is the harmonic (default) or arithmetic mean of the two
//! adjacent cell entries; boundary faces use the interior cell. Off-diagonal
//! entries enter through a vertex-centred form: on every 2×2 block of cells
//! in a coordinate plane the tangential differences are averaged and
//! weighted by the block-averaged entry. Ghost cells contribute zero values
//! and no tensor. The resulting bilinear form is symmetric whenever the
//! field is, and the transposed field yields the exact adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, CoefficientField, FaceField, Grid, GridFunction};
use crate::tensor::Vector;

/// How face coefficients are formed from the two neighbouring cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceAveraging {
    #[default]
    Harmonic,
    Arithmetic,
}

impl FaceAveraging {
    fn mean(self, a: f64, b: f64) -> f64 {
        match self {
            FaceAveraging::Arithmetic => 0.5 * (a + b),
            FaceAveraging::Harmonic => {
                if a + b == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative residual target `‖b − Lx‖ / ‖b‖`.
    pub tol: f64,
    /// Defaults to `50 · n^{1/d}`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
    pub face_averaging: FaceAveraging,
    /// Keep the full residual history in the diagnostics.
    pub record_history: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
            face_averaging: FaceAveraging::Harmonic,
            record_history: false,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        SolverSettings { tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::param(format!("solver tolerance must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::param("max_iter must be positive"));
        }
        Ok(())
    }
}

/// The problem data: field, massive parameter `T` and whether to use the
/// pointwise transpose. `T = ∞` drops the zero-order term.
#[derive(Clone, Copy, Debug)]
pub struct OperatorSpec<'a> {
    pub field: &'a CoefficientField,
    pub massive: f64,
    pub transpose: bool,
}

impl<'a> OperatorSpec<'a> {
    pub fn new(field: &'a CoefficientField, massive: f64) -> Self {
        OperatorSpec { field, massive, transpose: false }
    }

    pub fn adjoint(self) -> Self {
        OperatorSpec { transpose: !self.transpose, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.massive > 0.0) {
            return Err(Error::param(format!("massive parameter T must be positive, got {}", self.massive)));
        }
        let ell = self.field.ellipticity();
        if !(ell > 0.0) {
            let d = self.field.dim();
            let cell = self
                .field
                .cells
                .iter()
                .position(|a| !(crate::tensor::symmetric_eigenvalues(d, a)[0] > 0.0))
                .unwrap_or(0);
            return Err(Error::NotElliptic { cell, reason: format!("smallest eigenvalue {ell:.3e}") });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Vertex {
    cells: [usize; 4],
    a_ij: f64,
    a_ji: f64,
}

#[derive(Clone, Debug)]
struct CrossTerms {
    i: usize,
    j: usize,
    vertices: Vec<Vertex>,
}

const GHOST: usize = usize::MAX;

/// A prepared operator; building it is linear in the number of cells and it
/// can be reused for many right-hand sides and values of `T`.
#[derive(Clone, Debug)]
pub struct Operator {
    grid: Grid,
    mass: f64,
    massive: f64,
    transposed: bool,
    symmetric: bool,
    /// Face coefficients of the diagonal entries, face layout per axis.
    face_coef: Vec<Vec<f64>>,
    /// `links[i][k]`: coefficient / h² of the link between `k − e_i` and `k`.
    links: Vec<Vec<f64>>,
    /// Two-point diagonal without the mass term.
    stiff_diag: Vec<f64>,
    diag: Vec<f64>,
    cross: Vec<CrossTerms>,
}

impl Operator {
    pub fn new(spec: &OperatorSpec, averaging: FaceAveraging) -> Result<Self> {
        spec.validate()?;
        let field = spec.field;
        let g = field.grid.clone();
        let d = g.dim();
        let h = g.spacing();
        let h2 = h * h;
        let n = g.len();
        let shape = g.shape();
        let entry = |cell: usize, i: usize, j: usize| {
            let a = &field.cells[cell];
            if spec.transpose {
                a[j][i]
            } else {
                a[i][j]
            }
        };

        let mut face_coef = Vec::with_capacity(d);
        let mut links = Vec::with_capacity(d);
        let mut stiff_diag = vec![0.0; n];
        for axis in 0..d {
            let fs = g.face_shape(axis);
            let mut fc = vec![0.0; g.face_len(axis)];
            let mut w = vec![0.0; n];
            for k0 in 0..fs[0] {
                for k1 in 0..fs[1] {
                    for k2 in 0..fs[2] {
                        let k = [k0, k1, k2];
                        let hi = (k[axis] < shape[axis]).then(|| g.index(k));
                        let lo = (k[axis] > 0).then(|| {
                            let mut km = k;
                            km[axis] -= 1;
                            g.index(km)
                        });
                        let c = match (lo, hi) {
                            (Some(a), Some(b)) => averaging.mean(entry(a, axis, axis), entry(b, axis, axis)),
                            (Some(a), None) => entry(a, axis, axis),
                            (None, Some(b)) => entry(b, axis, axis),
                            (None, None) => unreachable!(),
                        };
                        fc[g.face_index(axis, k)] = c;
                        if let Some(a) = lo {
                            stiff_diag[a] += c / h2;
                        }
                        if let Some(b) = hi {
                            stiff_diag[b] += c / h2;
                            if lo.is_some() {
                                w[b] = c / h2;
                            }
                        }
                    }
                }
            }
            face_coef.push(fc);
            links.push(w);
        }

        let mut cross = Vec::new();
        let has_cross = field.cells.iter().any(|a| crate::tensor::has_off_diagonal(d, a));
        if has_cross {
            for i in 0..d {
                for j in i + 1..d {
                    cross.push(build_cross(&g, i, j, &entry));
                }
            }
        }

        let massive = spec.massive;
        let mass = 1.0 / massive;
        let diag = stiff_diag.iter().map(|s| s + mass).collect();
        Ok(Operator {
            grid: g,
            mass,
            massive,
            transposed: spec.transpose,
            symmetric: field.is_symmetric(),
            face_coef,
            links,
            stiff_diag,
            diag,
            cross,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn massive(&self) -> f64 {
        self.massive
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// Changes `T` in place; only the diagonal depends on it.
    pub fn set_massive(&mut self, massive: f64) -> Result<()> {
        if !(massive > 0.0) {
            return Err(Error::param(format!("massive parameter T must be positive, got {massive}")));
        }
        self.massive = massive;
        self.mass = 1.0 / massive;
        for (d, s) in self.diag.iter_mut().zip(&self.stiff_diag) {
            *d = s + self.mass;
        }
        Ok(())
    }

    /// `y = L u`
    pub fn apply(&self, u: &[f64], y: &mut [f64]) {
        for ((y, d), u) in y.iter_mut().zip(&self.diag).zip(u) {
            *y = d * u;
        }
        for (axis, w) in self.links.iter().enumerate() {
            let s = self.grid.stride(axis);
            let n = u.len();
            for ((yk, wk), um) in y[s..].iter_mut().zip(&w[s..]).zip(&u[..n - s]) {
                *yk -= wk * um;
            }
            for ((ym, wk), uk) in y[..n - s].iter_mut().zip(&w[s..]).zip(&u[s..]) {
                *ym -= wk * uk;
            }
        }
        let h = self.grid.spacing();
        for ct in &self.cross {
            apply_cross(ct, h, u, y);
        }
    }

    pub fn apply_fn(&self, u: &GridFunction) -> Result<GridFunction> {
        self.grid.ensure_same(&u.grid, "operator and argument live on different grids")?;
        let mut y = vec![0.0; u.values.len()];
        self.apply(&u.values, &mut y);
        Ok(GridFunction { grid: self.grid.clone(), values: y })
    }

    /// Right-hand side `∇·Aξ` of the corrector equation, taken as the
    /// functional `v ↦ −a(ξ·x, v)` with exact gradients of the linear
    /// profile, so constant fields give exactly zero.
    pub fn corrector_rhs(&self, xi: &Vector) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim();
        let h = g.spacing();
        let mut b = vec![0.0; g.len()];
        for (idx, bk) in b.iter_mut().enumerate() {
            let k = g.multi_index(idx);
            for axis in 0..d {
                let mut kp = k;
                kp[axis] += 1;
                let fc = &self.face_coef[axis];
                *bk += xi[axis] * (fc[g.face_index(axis, kp)] - fc[g.face_index(axis, k)]) / h;
            }
        }
        let s = 0.5 / h;
        for ct in &self.cross {
            for v in &ct.vertices {
                let (xi_i, xi_j) = (xi[ct.i], xi[ct.j]);
                for (c, (si, sj)) in v.cells.iter().zip(SIGNS) {
                    if *c != GHOST {
                        b[*c] -= s * (si * v.a_ij * xi_j + sj * v.a_ji * xi_i);
                    }
                }
            }
        }
        b
    }

    fn default_max_iter(&self) -> usize {
        let n = self.grid.len() as f64;
        (50.0 * n.powf(1.0 / self.grid.dim() as f64)).ceil() as usize
    }

    /// Solves `L x = b` from an optional initial guess.
    pub fn solve(&self, b: &[f64], x0: Option<&[f64]>, settings: &SolverSettings) -> Result<(Vec<f64>, SolveDiagnostics)> {
        settings.validate()?;
        if b.len() != self.grid.len() || x0.is_some_and(|x| x.len() != b.len()) {
            return Err(Error::GridMismatch("right-hand side does not match the operator grid".into()));
        }
        let max_iter = settings.max_iter.unwrap_or_else(|| self.default_max_iter());
        if self.symmetric || !self.has_cross() {
            pcg(self, b, x0, settings, max_iter)
        } else {
            bicgstab(self, b, x0, settings, max_iter)
        }
    }

    fn has_cross(&self) -> bool {
        !self.cross.is_empty()
    }

    fn precondition(&self, pre: Preconditioner, r: &[f64], z: &mut [f64]) {
        match pre {
            Preconditioner::None => z.copy_from_slice(r),
            Preconditioner::Jacobi => {
                for ((z, r), d) in z.iter_mut().zip(r).zip(&self.diag) {
                    *z = r / d;
                }
            }
        }
    }

    /// Corrector `φ` solving `L φ = ∇·Aξ`.
    pub fn solve_corrector(&self, xi: &Vector, settings: &SolverSettings, warm: Option<&GridFunction>) -> Result<CorrectorSolution> {
        let b = self.corrector_rhs(xi);
        let x0 = warm.map(|w| w.values.as_slice());
        let (x, diagnostics) = self.solve(&b, x0, settings)?;
        let phi = GridFunction { grid: self.grid.clone(), values: x };
        let energy = self.energy_balance(&phi.values, &b);
        let limit = 10.0 * settings.tol;
        if energy.defect > limit {
            return Err(Error::EnergyIdentity { defect: energy.defect, limit });
        }
        let grad_phi = grid::gradient(&phi);
        Ok(CorrectorSolution {
            grad_phi,
            xi: *xi,
            massive: self.massive,
            transposed: self.transposed,
            residual_norm: diagnostics.relative_residual,
            iterations: diagnostics.iterations,
            domain_radius: self.grid.half_width(),
            energy,
            diagnostics,
            phi,
        })
    }

    /// `Σ η (ξ_v + ∇v)·A(ξ_u + ∇u) hᵈ` evaluated with the operator's own
    /// quadrature: diagonal entries on faces, off-diagonal entries on
    /// vertices, with `η` averaged onto them. For `η ≡ 1`, `ξ = 0` this is
    /// the stiffness part of `⟨v, Lu⟩`.
    pub fn weighted_energy(&self, eta: &[f64], xi_v: &Vector, v: &[f64], xi_u: &Vector, u: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let shape = g.shape();
        let mut total = 0.0;
        for axis in 0..g.dim() {
            let fs = g.face_shape(axis);
            let fc = &self.face_coef[axis];
            let mut acc = 0.0;
            for k0 in 0..fs[0] {
                for k1 in 0..fs[1] {
                    for k2 in 0..fs[2] {
                        let k = [k0, k1, k2];
                        let hi = (k[axis] < shape[axis]).then(|| g.index(k));
                        let lo = (k[axis] > 0).then(|| {
                            let mut km = k;
                            km[axis] -= 1;
                            g.index(km)
                        });
                        let at = |w: &[f64], c: Option<usize>| c.map_or(0.0, |c| w[c]);
                        let ef = 0.5 * (at(eta, lo) + at(eta, hi));
                        if ef == 0.0 {
                            continue;
                        }
                        let du = xi_u[axis] + (at(u, hi) - at(u, lo)) / h;
                        let dv = xi_v[axis] + (at(v, hi) - at(v, lo)) / h;
                        acc += ef * fc[g.face_index(axis, k)] * dv * du;
                    }
                }
            }
            total += acc;
        }
        let s = 0.5 / h;
        for ct in &self.cross {
            for vx in &ct.vertices {
                let val = |w: &[f64], slot: usize| if vx.cells[slot] == GHOST { 0.0 } else { w[vx.cells[slot]] };
                let ev = 0.25 * (0..4).map(|slot| val(eta, slot)).sum::<f64>();
                if ev == 0.0 {
                    continue;
                }
                let grad = |w: &[f64], xi: &Vector| {
                    let (w00, w10, w01, w11) = (val(w, 0), val(w, 1), val(w, 2), val(w, 3));
                    (xi[ct.i] + s * (w10 - w00 + w11 - w01), xi[ct.j] + s * (w01 - w00 + w11 - w10))
                };
                let (ui, uj) = grad(u, xi_u);
                let (vi, vj) = grad(v, xi_v);
                total += ev * (vi * vx.a_ij * uj + vj * vx.a_ji * ui);
            }
        }
        total * g.cell_volume()
    }

    /// Splits `⟨φ, Lφ⟩ = ⟨φ, b⟩` into its mass, gradient and load parts.
    pub fn energy_balance(&self, phi: &[f64], b: &[f64]) -> EnergyBalance {
        let vol = self.grid.cell_volume();
        let mut lphi = vec![0.0; phi.len()];
        self.apply(phi, &mut lphi);
        let mass = self.mass * dot(phi, phi) * vol;
        let total = dot(phi, &lphi) * vol;
        let load = dot(phi, b) * vol;
        let scale = (dot(phi, phi) * dot(b, b)).sqrt() * vol;
        let defect = if scale > 0.0 { (total - load).abs() / scale } else { 0.0 };
        EnergyBalance { mass, gradient: total - mass, load, defect }
    }
}

/// Sign of `∂g_i/∂u_c` and `∂g_j/∂u_c` for the block cells 00, 10, 01, 11.
const SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)];

fn build_cross(g: &Grid, i: usize, j: usize, entry: &impl Fn(usize, usize, usize) -> f64) -> CrossTerms {
    let shape = g.shape();
    let mut vshape = shape;
    vshape[i] += 1;
    vshape[j] += 1;
    let mut vertices = Vec::with_capacity(vshape.iter().product());
    for v0 in 0..vshape[0] {
        for v1 in 0..vshape[1] {
            for v2 in 0..vshape[2] {
                let v = [v0, v1, v2];
                let mut cells = [GHOST; 4];
                let (mut sij, mut sji, mut count) = (0.0, 0.0, 0usize);
                for (slot, (di, dj)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                    // block cell 00 sits at (v_i − 1, v_j − 1)
                    let ci = v[i] as isize - 1 + di;
                    let cj = v[j] as isize - 1 + dj;
                    if ci < 0 || cj < 0 || ci >= shape[i] as isize || cj >= shape[j] as isize {
                        continue;
                    }
                    let mut k = v;
                    k[i] = ci as usize;
                    k[j] = cj as usize;
                    let idx = g.index(k);
                    cells[slot] = idx;
                    sij += entry(idx, i, j);
                    sji += entry(idx, j, i);
                    count += 1;
                }
                if count > 0 && (sij != 0.0 || sji != 0.0) {
                    vertices.push(Vertex { cells, a_ij: sij / count as f64, a_ji: sji / count as f64 });
                }
            }
        }
    }
    CrossTerms { i, j, vertices }
}

fn apply_cross(ct: &CrossTerms, h: f64, u: &[f64], y: &mut [f64]) {
    let s = 0.5 / h;
    for v in &ct.vertices {
        let val = |slot: usize| if v.cells[slot] == GHOST { 0.0 } else { u[v.cells[slot]] };
        let (u00, u10, u01, u11) = (val(0), val(1), val(2), val(3));
        let gi = s * (u10 - u00 + u11 - u01);
        let gj = s * (u01 - u00 + u11 - u10);
        let fi = v.a_ij * gj;
        let fj = v.a_ji * gi;
        for (c, (si, sj)) in v.cells.iter().zip(SIGNS) {
            if *c != GHOST {
                y[*c] += s * (si * fi + sj * fj);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Per-solve record, one JSON line per solve in the diagnostics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub method: String,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl SolveDiagnostics {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("diagnostics serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    /// `T⁻¹ Σ φ² hᵈ`
    pub mass: f64,
    /// Discrete `Σ ∇φ·A∇φ hᵈ`
    pub gradient: f64,
    /// `−Σ ∇φ·Aξ hᵈ`
    pub load: f64,
    /// `|mass + gradient − load| / (‖φ‖ ‖b‖)`
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct CorrectorSolution {
    pub phi: GridFunction,
    pub grad_phi: FaceField,
    pub xi: Vector,
    pub massive: f64,
    pub transposed: bool,
    pub residual_norm: f64,
    pub iterations: usize,
    pub domain_radius: f64,
    pub energy: EnergyBalance,
    pub diagnostics: SolveDiagnostics,
}

fn pcg(op: &Operator, b: &[f64], x0: Option<&[f64]>, st: &SolverSettings, max_iter: usize) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut diag = SolveDiagnostics { method: "pcg".into(), iterations: 0, relative_residual: 0.0, converged: true, history: vec![] };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], diag));
    }
    let mut x = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64], tmp: &mut [f64]| {
        op.apply(x, tmp);
        for ((r, b), t) in r.iter_mut().zip(b).zip(tmp.iter()) {
            *r = b - t;
        }
    };
    true_residual(&x, &mut r, &mut ap);
    let mut z = vec![0.0; n];
    op.precondition(st.preconditioner, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while it < max_iter {
        if rel <= st.tol {
            // confirm against the true residual before accepting
            true_residual(&x, &mut r, &mut ap);
            rel = norm(&r) / bnorm;
            if rel <= st.tol {
                break;
            }
            op.precondition(st.preconditioner, &r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        op.apply(&p, &mut ap);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::Indefinite { iteration: it, curvature: curv });
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        rel = norm(&r) / bnorm;
        if st.record_history {
            diag.history.push(rel);
        }
        op.precondition(st.preconditioner, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rel > st.tol {
        true_residual(&x, &mut r, &mut ap);
        rel = norm(&r) / bnorm;
    }
    diag.iterations = it;
    diag.relative_residual = rel;
    if rel > st.tol {
        return Err(Error::NotConverged { iterations: it, residual: rel });
    }
    Ok((x, diag))
}

fn bicgstab(op: &Operator, b: &[f64], x0: Option<&[f64]>, st: &SolverSettings, max_iter: usize) -> Result<(Vec<f64>, SolveDiagnostics)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut diag = SolveDiagnostics { method: "bicgstab".into(), iterations: 0, relative_residual: 0.0, converged: true, history: vec![] };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], diag));
    }
    let mut x = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    op.apply(&x, &mut tmp);
    let mut r: Vec<f64> = b.iter().zip(&tmp).map(|(b, t)| b - t).collect();
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel > st.tol && it < max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            // restart with the current residual as shadow vector
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|x| *x = 0.0);
            p.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        op.precondition(st.preconditioner, &p, &mut p_hat);
        op.apply(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(Error::Breakdown("r̂·v vanished".into()));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        it += 1;
        if norm(&s) / bnorm <= st.tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            r.copy_from_slice(&s);
            rel = norm(&r) / bnorm;
            if st.record_history {
                diag.history.push(rel);
            }
            break;
        }
        op.precondition(st.preconditioner, &s, &mut s_hat);
        op.apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(Error::Breakdown("t vanished".into()));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if st.record_history {
            diag.history.push(rel);
        }
        if omega == 0.0 {
            return Err(Error::Breakdown("ω vanished".into()));
        }
    }
    op.apply(&x, &mut tmp);
    let true_rel = norm(&b.iter().zip(&tmp).map(|(b, t)| b - t).collect::<Vec<_>>()) / bnorm;
    diag.iterations = it;
    diag.relative_residual = true_rel;
    if true_rel > st.tol {
        return Err(Error::NotConverged { iterations: it, residual: true_rel });
    }
    Ok((x, diag))
}

/// `T⁻¹u − ∇·A∇u` with the default face averaging.
pub fn apply_operator(spec: &OperatorSpec, u: &GridFunction) -> Result<GridFunction> {
    Operator::new(spec, FaceAveraging::default())?.apply_fn(u)
}

fn check_unit(xi: &Vector, dim: usize) -> Result<()> {
    let n: f64 = xi[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
    if !((n - 1.0).abs() <= 1e-9) || xi[dim..].iter().any(|&x| x != 0.0) {
        return Err(Error::param(format!("direction must be a unit {dim}-vector")));
    }
    Ok(())
}

/// Modified corrector `T⁻¹φ − ∇·A(ξ + ∇φ) = 0` in the box, `φ = 0` outside.
pub fn solve_modified_corrector(spec: &OperatorSpec, xi: &Vector, settings: &SolverSettings) -> Result<CorrectorSolution> {
    check_unit(xi, spec.field.dim())?;
    Operator::new(spec, settings.face_averaging)?.solve_corrector(xi, settings, None)
}

/// Same equation for the pointwise transpose of the field.
pub fn solve_adjoint_corrector(spec: &OperatorSpec, xi_prime: &Vector, settings: &SolverSettings) -> Result<CorrectorSolution> {
    let adj = OperatorSpec { transpose: !spec.transpose, ..*spec };
    solve_modified_corrector(&adj, xi_prime, settings)
}

/// `T⁻¹ψ − ∇·A∇ψ = φ`, i.e. `ψ = T² ∂φ/∂T`.
pub fn solve_psi(spec: &OperatorSpec, phi: &CorrectorSolution, settings: &SolverSettings) -> Result<GridFunction> {
    spec.field.grid.ensure_same(&phi.phi.grid, "corrector lives on a different grid")?;
    if phi.massive != spec.massive || phi.transposed != spec.transpose {
        return Err(Error::param("corrector was solved for a different operator"));
    }
    let op = Operator::new(spec, settings.face_averaging)?;
    let (x, _) = op.solve(&phi.phi.values, None, settings)?;
    Ok(GridFunction { grid: op.grid.clone(), values: x })
}

/// Column `G_T(·, y)` for the source cell `y`, with right-hand side `h^{-d}`
/// there so that it integrates to one.
pub fn solve_green_column(spec: &OperatorSpec, source_cell: [usize; 3], settings: &SolverSettings) -> Result<GridFunction> {
    let op = Operator::new(spec, settings.face_averaging)?;
    green_column(&op, source_cell, settings).map(|(g, _)| g)
}

/// Green column on a prepared operator, with diagnostics.
pub fn green_column(op: &Operator, source_cell: [usize; 3], settings: &SolverSettings) -> Result<(GridFunction, SolveDiagnostics)> {
    let g = op.grid();
    let shape = g.shape();
    for i in 0..g.dim() {
        if source_cell[i] == 0 || source_cell[i] + 1 >= shape[i] {
            return Err(Error::Geometry(format!("source cell {source_cell:?} is not strictly interior")));
        }
    }
    for i in g.dim()..3 {
        if source_cell[i] != 0 {
            return Err(Error::Geometry(format!("source cell {source_cell:?} has extra coordinates")));
        }
    }
    let mut b = vec![0.0; g.len()];
    b[g.index(source_cell)] = 1.0 / g.cell_volume();
    let (x, d) = op.solve(&b, None, settings)?;
    Ok((GridFunction { grid: g.clone(), values: x }, d))
}
