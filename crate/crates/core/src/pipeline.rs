//! Recording → segment corpus chain shared by the CLI and the test suites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{synth_fixture, trim_edges, FixtureSpec, Recording};
use crate::preprocess::{apply_filter, design_bandpass, preprocess, BandPassSpec, PreprocessConfig};
use crate::quality::{assess, QualityReport, QualityThresholds};
use crate::segment::{segment_signal, SegmentConfig, SegmentMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub trim_fraction: f64,
    /// Run the quality gate on the band-passed signal instead of the raw one.
    pub qc_after_bandpass: bool,
    pub quality: QualityThresholds,
    pub preprocess: PreprocessConfig,
    pub segment: SegmentConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            trim_fraction: 0.1,
            qc_after_bandpass: false,
            quality: QualityThresholds::default(),
            preprocess: PreprocessConfig::default(),
            segment: SegmentConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorpusBuild {
    pub segments: SegmentMatrix,
    pub reports: Vec<QualityReport>,
}

/// Trim → quality gate → preprocess → segment. Failing recordings are
/// reported and contribute no rows.
pub fn build_corpus(recordings: &[Recording], cfg: &CorpusConfig) -> Result<CorpusBuild> {
    let mut segments = SegmentMatrix::new(cfg.segment.length);
    let mut reports = Vec::with_capacity(recordings.len());
    for rec in recordings {
        let trimmed = trim_edges(rec, cfg.trim_fraction)?;
        let report = assess(&qc_view(&trimmed, cfg)?, &cfg.quality)?;
        let pass = report.pass;
        reports.push(report);
        if !pass {
            continue;
        }
        let (x, rate) = preprocess(&trimmed.samples, trimmed.sample_rate_hz, &cfg.preprocess)?;
        let trace = segment_signal(&x, rate, &cfg.segment, &trimmed.subject_id)?;
        segments.append(trace.segments)?;
    }
    Ok(CorpusBuild { segments, reports })
}

/// The signal the quality gate sees for an already trimmed recording.
pub fn qc_view(trimmed: &Recording, cfg: &CorpusConfig) -> Result<Recording> {
    if !cfg.qc_after_bandpass {
        return Ok(trimmed.clone());
    }
    let spec = BandPassSpec {
        sample_rate_hz: trimmed.sample_rate_hz as f64,
        ..cfg.preprocess.bandpass.clone()
    };
    let filtered = apply_filter(&trimmed.samples, &design_bandpass(&spec)?)?;
    Ok(trimmed.with_samples(filtered))
}

/// The first `rows` segments of a fixture corpus grown until it is large enough.
pub fn fixture_corpus(rows: usize, seed: u64, cfg: &CorpusConfig) -> Result<SegmentMatrix> {
    let mut spec = FixtureSpec {
        seed,
        n_recordings: rows / 8 + 1,
        ..FixtureSpec::default()
    };
    loop {
        let built = build_corpus(&synth_fixture(&spec)?, cfg)?;
        if built.segments.rows() >= rows {
            let idx: Vec<usize> = (0..rows).collect();
            return Ok(built.segments.select(&idx));
        }
        if built.segments.rows() == 0 {
            return Err(Error::InsufficientData("fixture recordings produced no segments".into()));
        }
        spec.n_recordings *= 2;
    }
}
