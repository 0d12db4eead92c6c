//! Recording ingestion: WAV I/O, manifest filtering, edge trimming and
//! synthetic fixture corpora.

mod fixture;
mod manifest;
mod wav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fixture::{synth_fixture, FixtureSpec, FIXTURE_SAMPLE_RATE_HZ};
pub use manifest::{load_normal_subjects, LoadReport, Manifest, ManifestRow, RowError};
pub use wav::{read_wav, write_wav};

pub const DEFAULT_TRIM_FRACTION: f64 = 0.10;

/// Auscultation site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    PV,
    AV,
    MV,
    TV,
    Phc,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Normal,
    Abnormal,
    Unknown,
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pv" => Ok(Location::PV),
            "av" => Ok(Location::AV),
            "mv" => Ok(Location::MV),
            "tv" => Ok(Location::TV),
            "phc" => Ok(Location::Phc),
            "unknown" | "" => Ok(Location::Unknown),
            other => Err(Error::Format(format!("unknown auscultation location {other:?}"))),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Location::PV => "PV",
            Location::AV => "AV",
            Location::MV => "MV",
            Location::TV => "TV",
            Location::Phc => "Phc",
            Location::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Outcome::Normal),
            "abnormal" => Ok(Outcome::Abnormal),
            "unknown" => Ok(Outcome::Unknown),
            other => Err(Error::Format(format!("unknown outcome {other:?}"))),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Normal => "Normal",
            Outcome::Abnormal => "Abnormal",
            Outcome::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

/// One mono PCG waveform with its metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub location: Location,
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
    pub outcome: Outcome,
}

impl Recording {
    pub fn new(subject_id: impl Into<String>, sample_rate_hz: u32, samples: Vec<f64>) -> Result<Self> {
        let rec = Self {
            subject_id: subject_id.into(),
            location: Location::Unknown,
            sample_rate_hz,
            samples,
            outcome: Outcome::Unknown,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.samples.is_empty() {
            return Err(Error::invalid(format!("recording {} has no samples", self.subject_id)));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "recording {} has a non-finite sample at {i}",
                self.subject_id
            )));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            ..self.clone()
        }
    }
}

/// Drops `floor(fraction·L)` samples from each end.
pub fn trim_edges(rec: &Recording, fraction: f64) -> Result<Recording> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::invalid(format!("trim fraction {fraction} not in [0, 0.5)")));
    }
    let len = rec.samples.len();
    if len < 10 {
        return Err(Error::invalid(format!("recording of {len} samples is too short to trim")));
    }
    let cut = (fraction * len as f64).floor() as usize;
    Ok(rec.with_samples(rec.samples[cut..len - cut].to_vec()))
}
