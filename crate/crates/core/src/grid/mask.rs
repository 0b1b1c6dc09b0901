use std::f64::consts::PI;

use super::Grid;
use crate::error::{Error, Result};

/// Smooth averaging weight `η_L(x) ∝ cos²(π|x|/(2L))` on the ball of radius
/// `L` about the grid midpoint, normalized so that `Σ η hᵈ = 1` exactly.
///
/// Only the support is stored, as `(cell, weight)` pairs in ascending cell
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragingMask {
    radius: f64,
    grid: Grid,
    support: Vec<(usize, f64)>,
}

impl AveragingMask {
    pub fn new(grid: &Grid, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("mask radius must be positive"));
        }
        if radius > grid.half_width() + 1e-12 {
            return Err(Error::Geometry(format!(
                "mask radius {radius} overflows the box (half-width {})",
                grid.half_width()
            )));
        }
        let c = grid.midpoint();
        let d = grid.dim();
        let mut support: Vec<(usize, f64)> = grid
            .cells_in_ball(&c, radius)
            .into_iter()
            .map(|idx| {
                let x = grid.center(idx);
                let r = (0..d).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>().sqrt();
                (idx, (0.5 * PI * r / radius).cos().powi(2))
            })
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let total: f64 = support.iter().map(|&(_, w)| w).sum::<f64>() * grid.cell_volume();
        if total <= 0.0 {
            return Err(Error::Geometry("mask radius below grid resolution".into()));
        }
        for (_, w) in support.iter_mut() {
            *w /= total;
        }
        Ok(AveragingMask { radius, grid: grid.clone(), support })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn support(&self) -> &[(usize, f64)] {
        &self.support
    }

    /// Mask values on the full grid.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.grid.len()];
        for &(i, w) in &self.support {
            v[i] = w;
        }
        v
    }

    /// `Σ w η hᵈ` for per-cell values laid out on the mask grid.
    pub fn average_values(&self, w: &[f64]) -> f64 {
        self.average_by(|i| w[i])
    }

    pub fn average_by(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.grid.cell_volume() * self.support.iter().map(|&(i, w)| w * f(i)).sum::<f64>()
    }

    /// Largest finite-difference slope `|η(k+e_i) − η(k)| / h`.
    pub fn max_slope(&self) -> f64 {
        let v = self.values();
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for idx in 0..g.len() {
            let k = g.multi_index(idx);
            for axis in 0..g.dim() {
                if k[axis] + 1 < g.shape()[axis] {
                    let j = idx + g.stride(axis);
                    m = m.max((v[j] - v[idx]).abs() / g.spacing());
                }
            }
        }
        m
    }
}
