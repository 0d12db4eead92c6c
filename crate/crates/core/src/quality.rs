//! Recording-level corruption screens: RMSSD, zero-crossing ratio and the
//! fraction of windows with a plausible peak count.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Recording;
use crate::preprocess::unit_range_normalize;
use crate::segment::{detect_peaks, PeakParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityThresholds {
    pub rmssd_max: f64,
    pub zcr_max: f64,
    pub peak_window_min_fraction: f64,
    pub window_ms: f64,
    pub peaks_per_window: (usize, usize),
    /// Minimum spacing between counted peaks, seconds.
    pub peak_min_spacing_s: f64,
    /// Prominence floor on the unit-range signal.
    pub peak_min_prominence: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            rmssd_max: 0.1,
            zcr_max: 0.3,
            peak_window_min_fraction: 0.5,
            window_ms: 2200.0,
            peaks_per_window: (1, 8),
            peak_min_spacing_s: 0.1,
            peak_min_prominence: 0.2,
        }
    }
}

impl QualityThresholds {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.rmssd_max, self.zcr_max, self.window_ms, self.peak_min_spacing_s];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("quality thresholds must be positive"));
        }
        if !(self.peak_window_min_fraction > 0.0 && self.peak_window_min_fraction <= 1.0) {
            return Err(Error::invalid("peak_window_min_fraction must lie in (0, 1]"));
        }
        if self.peaks_per_window.0 > self.peaks_per_window.1 {
            return Err(Error::invalid("peaks_per_window range is empty"));
        }
        if !(self.peak_min_prominence >= 0.0) {
            return Err(Error::invalid("peak_min_prominence must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Criterion {
    Rmssd,
    Zcr,
    PeakWindows,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Rmssd => "RMSSD",
            Criterion::Zcr => "ZCR",
            Criterion::PeakWindows => "PEAK_WINDOWS",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub subject_id: String,
    pub rmssd: f64,
    pub zcr: f64,
    pub peak_window_ratio: f64,
    pub pass: bool,
    pub failed_criteria: BTreeSet<Criterion>,
}

impl QualityReport {
    pub const CSV_HEADER: [&'static str; 6] =
        ["subject_id", "rmssd", "zcr", "peak_window_ratio", "pass", "failed_criteria"];

    pub fn csv_record(&self) -> [String; 6] {
        let failed: Vec<String> = self.failed_criteria.iter().map(Criterion::to_string).collect();
        [
            self.subject_id.clone(),
            format!("{}", self.rmssd),
            format!("{}", self.zcr),
            format!("{}", self.peak_window_ratio),
            self.pass.to_string(),
            failed.join(";"),
        ]
    }
}

pub fn write_qc_csv(w: impl std::io::Write, reports: &[QualityReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(QualityReport::CSV_HEADER)?;
    for r in reports {
        wr.write_record(r.csv_record())?;
    }
    wr.flush()?;
    Ok(())
}

fn require_len(x: &[f64], op: &str) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::invalid(format!("{op} needs at least two samples")));
    }
    Ok(())
}

/// Root mean square of successive differences.
pub fn rmssd(x: &[f64]) -> Result<f64> {
    require_len(x, "rmssd")?;
    let ss: f64 = x.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Ok((ss / (x.len() - 1) as f64).sqrt())
}

/// Sign changes per sample; zeros carry the previous non-zero sign.
pub fn zero_crossing_ratio(x: &[f64]) -> Result<f64> {
    require_len(x, "zero_crossing_ratio")?;
    let mut prev = 0.0f64;
    let mut crossings = 0usize;
    for &v in x {
        let s = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            prev
        };
        if s * prev < 0.0 {
            crossings += 1;
        }
        prev = s;
    }
    Ok(crossings as f64 / x.len() as f64)
}

/// Fraction of whole windows whose peak count lies in the accepted range.
pub fn peak_window_ratio(x: &[f64], sample_rate_hz: u32, th: &QualityThresholds) -> Result<f64> {
    th.validate()?;
    let win = (th.window_ms * sample_rate_hz as f64 / 1000.0).round() as usize;
    if win < 3 || x.len() < win {
        return Err(Error::invalid(format!(
            "signal of {} samples is shorter than one {} ms window",
            x.len(),
            th.window_ms
        )));
    }
    let norm = match unit_range_normalize(x) {
        Ok(v) => v,
        // silent recording: no window has any peaks
        Err(Error::DegenerateSignal(_)) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let params = PeakParams {
        min_prominence: th.peak_min_prominence,
        ..PeakParams::for_rate(sample_rate_hz as f64, th.peak_min_spacing_s)
    };
    let (lo, hi) = th.peaks_per_window;
    let windows = norm.len() / win;
    let ok = norm
        .chunks_exact(win)
        .filter(|w| (lo..=hi).contains(&detect_peaks(w, &params).len()))
        .count();
    Ok(ok as f64 / windows as f64)
}

pub fn assess(rec: &Recording, th: &QualityThresholds) -> Result<QualityReport> {
    if rec.samples.is_empty() {
        return Err(Error::invalid("empty recording"));
    }
    let rmssd = rmssd(&rec.samples)?;
    let zcr = zero_crossing_ratio(&rec.samples)?;
    let peak_window_ratio = peak_window_ratio(&rec.samples, rec.sample_rate_hz, th)?;
    let mut failed = BTreeSet::new();
    if !(rmssd < th.rmssd_max) {
        failed.insert(Criterion::Rmssd);
    }
    if !(zcr <= th.zcr_max) {
        failed.insert(Criterion::Zcr);
    }
    if !(peak_window_ratio >= th.peak_window_min_fraction) {
        failed.insert(Criterion::PeakWindows);
    }
    Ok(QualityReport {
        subject_id: rec.subject_id.clone(),
        rmssd,
        zcr,
        peak_window_ratio,
        pass: failed.is_empty(),
        failed_criteria: failed,
    })
}
