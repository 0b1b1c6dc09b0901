//! Statistical helpers shared by the estimators and studies.
//!
//! Every reduction goes through [`pairwise_sum`], a fixed binary-tree
//! summation, so results do not depend on how samples were scheduled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile used for every confidence interval.
pub const Z95: f64 = 1.959963984540054;

/// Fixed-order pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if v.len() <= LEAF {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased two-pass sample variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let sq: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (v.len() - 1) as f64
}

/// A point estimate with its standard error and 95% CI half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub ci_half_width: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0, ci_half_width: 0.0 }
    }

    pub fn from_std_error(value: f64, std_error: f64) -> Self {
        Estimate { value, std_error, ci_half_width: Z95 * std_error }
    }
}

/// Leave-one-out jackknife of an arbitrary statistic.
///
/// The variance convention is `(n−1)/n · Σ (θ₍ᵢ₎ − θ̄)²`; for the mean it
/// coincides with `s²/n`, so the pair `{a, b}` gives `(a−b)²/4`.
pub fn jackknife(values: &[f64], statistic: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("jackknife needs at least 2 samples, got {n}")));
    }
    let full = statistic(values);
    let mut buf = Vec::with_capacity(n - 1);
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            buf.clear();
            buf.extend(values.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x));
            statistic(&buf)
        })
        .collect();
    let m = mean(&loo);
    let dev: Vec<f64> = loo.iter().map(|t| (t - m) * (t - m)).collect();
    let var = (n - 1) as f64 / n as f64 * pairwise_sum(&dev);
    Ok(Estimate::from_std_error(full, var.max(0.0).sqrt()))
}

/// Jackknife of the sample mean; closed form, O(n).
pub fn jackknife_mean(values: &[f64]) -> Result<Estimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("jackknife needs at least 2 samples, got {n}")));
    }
    Ok(Estimate::from_std_error(mean(values), (variance(values) / n as f64).sqrt()))
}

/// Jackknife of the unbiased sample variance.
pub fn jackknife_variance(values: &[f64]) -> Result<Estimate> {
    jackknife(values, variance)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Result of a (weighted) straight-line fit `y = intercept + slope·x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

/// Weighted least squares. The slope standard error is estimated from the
/// weighted residual scatter, so it vanishes on exact data.
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::param("fit inputs have different lengths"));
    }
    if n < 2 {
        return Err(Error::InsufficientData("a line fit needs at least 2 points".into()));
    }
    let w: Vec<f64> = weights.map(|w| w.to_vec()).unwrap_or_else(|| vec![1.0; n]);
    let sw = pairwise_sum(&w);
    let xm = pairwise_sum(&x.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let ym = pairwise_sum(&y.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>()) / sw;
    let sxx: f64 = pairwise_sum(&(0..n).map(|i| w[i] * (x[i] - xm).powi(2)).collect::<Vec<_>>());
    if sxx <= 1e-300 * sw || x.iter().all(|&v| v == x[0]) {
        return Err(Error::DegenerateAbscissa);
    }
    let sxy: f64 = pairwise_sum(&(0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).collect::<Vec<_>>());
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - intercept - slope * x[i]).collect();
    let ssr = pairwise_sum(&(0..n).map(|i| w[i] * residuals[i].powi(2)).collect::<Vec<_>>());
    let syy = pairwise_sum(&(0..n).map(|i| w[i] * (y[i] - ym).powi(2)).collect::<Vec<_>>());
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    let slope_std_error = if n > 2 {
        // normalize weights to mean one so the scatter estimate is scale-free
        let scale = n as f64 / sw;
        ((ssr * scale / (n - 2) as f64) / (sxx * scale)).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, slope_std_error, r_squared, residuals })
}

/// Straight-line fit in log-log coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub std_error: f64,
    pub r_squared: f64,
    pub intercept: f64,
    pub residuals: Vec<f64>,
}

/// Weighted least squares of `ln y` on `ln x` for points `(x, y, y_ci)`.
///
/// The weight of a point is `(y / σ_y)²` with `σ_y = y_ci / 1.96`, the
/// delta-method variance of `ln y`. If any interval is zero the fit is
/// unweighted.
pub fn fit_loglog(points: &[(f64, f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!("a slope fit needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::param("nonpositive values in log-log fit"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let weighted = points.iter().all(|p| p.2 > 0.0 && p.2.is_finite());
    let w: Vec<f64> = points.iter().map(|p| (p.1 * Z95 / p.2).powi(2)).collect();
    let f = linear_fit(&x, &y, weighted.then_some(w.as_slice()))?;
    Ok(LogLogFit {
        slope: f.slope,
        std_error: f.slope_std_error,
        r_squared: f.r_squared,
        intercept: f.intercept,
        residuals: f.residuals,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    if d == 0.0 {
        return (0.0, 1.0);
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²)`
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
