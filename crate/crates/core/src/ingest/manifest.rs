use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::{read_wav, Location, Outcome, Recording};

pub const MANIFEST_HEADER: [&str; 4] = ["subject_id", "wav_path", "location", "outcome"];

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub subject_id: String,
    pub wav_path: PathBuf,
    pub location: Location,
    pub outcome: Outcome,
}

/// Dataset index. Relative `wav_path`s resolve against `base_dir`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(Error::Format(format!(
                "manifest header must be `{}`, found `{}`",
                MANIFEST_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let subject_id = record[0].trim().to_string();
            if subject_id.is_empty() {
                return Err(Error::Format(format!("manifest row {}: empty subject_id", line + 1)));
            }
            rows.push(ManifestRow {
                subject_id,
                wav_path: PathBuf::from(record[1].trim()),
                location: record[2].parse()?,
                outcome: record[3].parse()?,
            });
        }
        Ok(Self {
            base_dir: base_dir.into(),
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.subject_id,
                r.wav_path.display(),
                r.location,
                r.outcome
            ));
        }
        out
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.wav_path.is_absolute() {
            row.wav_path.clone()
        } else {
            self.base_dir.join(&row.wav_path)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowError {
    /// Zero-based data row index.
    pub row: usize,
    pub subject_id: String,
    pub message: String,
}

/// Outcome of loading the Normal-outcome rows of a manifest.
#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub recordings: Vec<Recording>,
    pub row_errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

/// Loads every `Normal` row; failures are collected per row.
pub fn load_normal_subjects(manifest: &Manifest) -> LoadReport {
    let mut report = LoadReport::default();
    let normal: Vec<(usize, &ManifestRow)> = manifest
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.outcome == Outcome::Normal)
        .collect();
    if normal.is_empty() {
        report
            .warnings
            .push("manifest contains no Normal-outcome rows".to_string());
    }
    for (i, row) in normal {
        match read_wav(manifest.resolve(row)) {
            Ok(mut rec) => {
                rec.subject_id = row.subject_id.clone();
                rec.location = row.location;
                rec.outcome = row.outcome;
                report.recordings.push(rec);
            }
            Err(e) => report.row_errors.push(RowError {
                row: i,
                subject_id: row.subject_id.clone(),
                message: e.to_string(),
            }),
        }
    }
    report
}
