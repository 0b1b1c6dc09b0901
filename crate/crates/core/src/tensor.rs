//! Small dense helpers for the d×d coefficient tensors (d ≤ 3).
//!
//! Tensors are stored as 3×3 arrays; entries outside the leading d×d block
//! are ignored and conventionally zero.

pub type Tensor = [[f64; 3]; 3];
pub type Vector = [f64; 3];

pub const ZERO: Tensor = [[0.0; 3]; 3];

pub fn identity(dim: usize) -> Tensor {
    scaled_identity(dim, 1.0)
}

pub fn scaled_identity(dim: usize, s: f64) -> Tensor {
    let mut t = ZERO;
    for (i, row) in t.iter_mut().enumerate().take(dim) {
        row[i] = s;
    }
    t
}

pub fn transpose(a: &Tensor) -> Tensor {
    let mut t = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn mat_vec(dim: usize, a: &Tensor, x: &Vector) -> Vector {
    let mut y = [0.0; 3];
    for i in 0..dim {
        y[i] = (0..dim).map(|j| a[i][j] * x[j]).sum();
    }
    y
}

pub fn dot(dim: usize, x: &Vector, y: &Vector) -> f64 {
    (0..dim).map(|i| x[i] * y[i]).sum()
}

/// `x · A y`
pub fn bilinear(dim: usize, x: &Vector, a: &Tensor, y: &Vector) -> f64 {
    dot(dim, x, &mat_vec(dim, a, y))
}

pub fn is_symmetric(dim: usize, a: &Tensor) -> bool {
    (0..dim).all(|i| (0..i).all(|j| a[i][j] == a[j][i]))
}

pub fn has_off_diagonal(dim: usize, a: &Tensor) -> bool {
    (0..dim).any(|i| (0..dim).any(|j| i != j && a[i][j] != 0.0))
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn symmetric_eigenvalues(dim: usize, a: &Tensor) -> Vec<f64> {
    let mut m = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            m[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    jacobi_eigenvalues(dim, m)
}

/// Spectral norm `max |A x| / |x|`.
pub fn operator_norm(dim: usize, a: &Tensor) -> f64 {
    let mut ata = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            ata[i][j] = (0..dim).map(|k| a[k][i] * a[k][j]).sum();
        }
    }
    let ev = jacobi_eigenvalues(dim, ata);
    ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Cyclic Jacobi rotations; exact enough for 3×3 and far simpler than a
/// closed-form cubic.
fn jacobi_eigenvalues(dim: usize, mut m: [[f64; 3]; 3]) -> Vec<f64> {
    for _sweep in 0..64 {
        let off: f64 = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..dim).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Checks membership in the admissible set: `|A ξ| ≤ |ξ|` and
/// `ξ·Aξ ≥ λ|ξ|²`, with a relative slack for round-off.
pub fn check_admissible(dim: usize, a: &Tensor, lambda: f64) -> Result<(), String> {
    const SLACK: f64 = 1e-12;
    if (0..dim).any(|i| (0..dim).any(|j| !a[i][j].is_finite())) {
        return Err("non-finite entry".into());
    }
    let lo = symmetric_eigenvalues(dim, a)[0];
    if lo < lambda - SLACK {
        return Err(format!("smallest eigenvalue of symmetric part {lo} < λ = {lambda}"));
    }
    let norm = operator_norm(dim, a);
    if norm > 1.0 + SLACK {
        return Err(format!("operator norm {norm} > 1"));
    }
    Ok(())
}
