//! Pure metric functions.

use crate::error::{Error, Result};
use crate::profile::GaussianParams;

/// Points of the uniform stance grid used for correlations.
pub const STANCE_GRID_POINTS: usize = 101;

/// Root-mean-square tracking error as a fraction of `peak`.
pub fn rmse_pct(desired: &[f64], actual: &[f64], peak: f64) -> Result<f64> {
    if desired.len() != actual.len() || desired.is_empty() {
        return Err(Error::Metric(format!(
            "rmse needs equal non-empty series, got {} and {}",
            desired.len(),
            actual.len()
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::Metric(format!(
            "rmse peak must be positive, got {peak}"
        )));
    }
    let ss: f64 = desired
        .iter()
        .zip(actual)
        .map(|(d, a)| (d - a) * (d - a))
        .sum();
    Ok((ss / desired.len() as f64).sqrt() / peak)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Metric(format!(
            "pearson needs equal series of at least 3, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric(
            "correlation undefined for a constant series".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Euclidean distance of `(mu, sigma1, sigma2)` from a target triple.
pub fn param_distance(p: &GaussianParams, target: (f64, f64, f64)) -> f64 {
    let d = [p.mu - target.0, p.sigma1 - target.1, p.sigma2 - target.2];
    d.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// First index after which the parameter error stays within `tol` times the initial
/// error for the rest of the history. `None` if the last entry is still outside.
pub fn convergence_stride(
    history: &[GaussianParams],
    target: (f64, f64, f64),
    tol: f64,
) -> Option<usize> {
    let first = history.first()?;
    let bound = tol * param_distance(first, target);
    let mut idx = None;
    for (i, p) in history.iter().enumerate().rev() {
        if param_distance(p, target) <= bound {
            idx = Some(i);
        } else {
            break;
        }
    }
    idx
}

/// Linear resampling of `(x, y)` samples onto `n` uniform points spanning the x range.
pub fn resample(x: &[f64], y: &[f64], n: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() < 2 || n < 2 {
        return Err(Error::Metric("resample needs at least two samples".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Metric("resample abscissa must increase".into()));
    }
    let (x0, x1) = (x[0], x[x.len() - 1]);
    Ok((0..n)
        .map(|i| {
            let xi = x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
            let j = x.partition_point(|&v| v < xi).clamp(1, x.len() - 1);
            let w = (xi - x[j - 1]) / (x[j] - x[j - 1]);
            y[j - 1] + w * (y[j] - y[j - 1])
        })
        .collect())
}

/// Pearson correlation of two stance curves after normalising each by its maximum.
pub fn stance_correlation(mechanical: &[f64], biological: &[f64]) -> Result<f64> {
    let norm = |v: &[f64]| -> Result<Vec<f64>> {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(m > 0.0) {
            return Err(Error::Metric("stance curve has no positive maximum".into()));
        }
        Ok(v.iter().map(|x| x / m).collect())
    };
    pearson(&norm(mechanical)?, &norm(biological)?)
}

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((m, sd))
}
