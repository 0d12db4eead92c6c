//! Point and interval accuracy of forecasts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COVERAGE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub mae: f64,
    pub mse: f64,
    pub smape_percent: f64,
    pub acd: f64,
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(format!(
            "{} true values vs {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("forecast metrics need at least one observation"));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Symmetric MAPE in percent; terms with `y = ŷ = 0` contribute 0.
pub fn smape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let denom = 0.5 * (a.abs() + b.abs());
            if denom == 0.0 {
                0.0
            } else {
                (a - b).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * total / y.len() as f64)
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean over coverage levels of `|c_q − q|`, where `c_q` is the fraction of
/// steps whose true value lies at or below the q-quantile of the sampled
/// paths. `paths[k][i]` is path k at step i.
pub fn acd(y: &[f64], paths: &[Vec<f64>]) -> Result<f64> {
    if paths.len() < 10 {
        return Err(Error::invalid(format!(
            "coverage needs at least 10 sample paths, got {}",
            paths.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("coverage needs at least one observation"));
    }
    if let Some(p) = paths.iter().find(|p| p.len() != y.len()) {
        return Err(Error::shape(format!("path of length {} vs {} steps", p.len(), y.len())));
    }
    let mut hits = [0usize; COVERAGE_LEVELS.len()];
    let mut column = vec![0.0; paths.len()];
    for (i, &yi) in y.iter().enumerate() {
        for (c, p) in column.iter_mut().zip(paths) {
            *c = p[i];
        }
        column.sort_by(f64::total_cmp);
        for (h, &q) in hits.iter_mut().zip(&COVERAGE_LEVELS) {
            if yi <= quantile_sorted(&column, q) {
                *h += 1;
            }
        }
    }
    let n = y.len() as f64;
    Ok(hits
        .iter()
        .zip(&COVERAGE_LEVELS)
        .map(|(&h, &q)| (h as f64 / n - q).abs())
        .sum::<f64>()
        / COVERAGE_LEVELS.len() as f64)
}

pub fn forecast_metrics(y: &[f64], y_hat: &[f64], paths: &[Vec<f64>]) -> Result<ForecastMetrics> {
    Ok(ForecastMetrics {
        mae: mae(y, y_hat)?,
        mse: mse(y, y_hat)?,
        smape_percent: smape(y, y_hat)?,
        acd: acd(y, paths)?,
    })
}
