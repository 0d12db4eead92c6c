//! Local-maximum peak picking with prominence and spacing constraints.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub indices: Vec<usize>,
    pub heights: Vec<f64>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn from_indices(signal: &[f64], indices: Vec<usize>) -> Self {
        let heights = indices.iter().map(|&i| signal[i]).collect();
        Self { indices, heights }
    }

    fn retain(&self, keep: impl Fn(usize) -> bool) -> Self {
        let (indices, heights) = self
            .indices
            .iter()
            .zip(&self.heights)
            .enumerate()
            .filter(|(k, _)| keep(*k))
            .map(|(_, (&i, &h))| (i, h))
            .unzip();
        Self { indices, heights }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakParams {
    pub min_distance_samples: usize,
    pub min_prominence: f64,
    pub height_outlier_z: f64,
}

impl PeakParams {
    pub const DEFAULT_MIN_SPACING_S: f64 = 0.3;

    /// Defaults for a signal sampled at `rate_hz`, with a minimum spacing in seconds.
    pub fn for_rate(rate_hz: f64, min_spacing_s: f64) -> Self {
        Self {
            min_distance_samples: ((min_spacing_s * rate_hz).round() as usize).max(1),
            min_prominence: 0.2,
            height_outlier_z: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_distance_samples == 0 {
            return Err(crate::Error::invalid("min_distance_samples must be at least 1"));
        }
        if !(self.min_prominence >= 0.0) {
            return Err(crate::Error::invalid("min_prominence must be non-negative"));
        }
        if !(self.height_outlier_z > 0.0) {
            return Err(crate::Error::invalid("height_outlier_z must be positive"));
        }
        Ok(())
    }
}

impl Default for PeakParams {
    /// Tuned for the 200 Hz level-2 approximation sequence.
    fn default() -> Self {
        Self::for_rate(200.0, Self::DEFAULT_MIN_SPACING_S)
    }
}

/// Strict local maxima; a flat top counts once, at its left edge.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Height above the higher of the two lowest points reached before the signal
/// climbs above the peak on either side (or hits an edge).
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let top = x[peak];
    let mut left_min = top;
    for &v in x[..peak].iter().rev() {
        if v > top {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = top;
    for &v in &x[peak + 1..] {
        if v > top {
            break;
        }
        right_min = right_min.min(v);
    }
    top - left_min.max(right_min)
}

/// Greedy spacing filter: visit peaks tallest first (ties: leftmost first) and
/// drop every remaining peak closer than `min_distance`.
pub fn enforce_min_distance(x: &[f64], peaks: &[usize], min_distance: usize) -> Vec<usize> {
    if min_distance <= 1 {
        return peaks.to_vec();
    }
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| x[peaks[b]].total_cmp(&x[peaks[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; peaks.len()];
    for &k in &order {
        if !keep[k] {
            continue;
        }
        let p = peaks[k];
        for (m, &q) in peaks.iter().enumerate() {
            if m != k && keep[m] && p.abs_diff(q) < min_distance {
                keep[m] = false;
            }
        }
    }
    peaks
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&p, _)| p)
        .collect()
}

/// Maxima that are prominent enough, then thinned to the minimum spacing.
pub fn detect_peaks(x: &[f64], params: &PeakParams) -> PeakSet {
    if x.len() < 3 {
        return PeakSet::default();
    }
    let prominent: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&p| prominence(x, p) >= params.min_prominence)
        .collect();
    let kept = enforce_min_distance(x, &prominent, params.min_distance_samples);
    PeakSet::from_indices(x, kept)
}

/// Drops peaks whose height z-score (population std) exceeds `z`.
pub fn reject_extreme_peaks(peaks: &PeakSet, z: f64) -> PeakSet {
    let n = peaks.len();
    if n < 2 {
        return peaks.clone();
    }
    let mean = peaks.heights.iter().sum::<f64>() / n as f64;
    let var = peaks.heights.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) {
        return peaks.clone();
    }
    peaks.retain(|k| ((peaks.heights[k] - mean) / std).abs() <= z)
}
