//! Beat segmentation: wavelet smoothing, S1 peak picking, fixed-length windows.

mod dwt;
mod peaks;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::preprocess::unit_range_normalize;

pub use dwt::{dwt_approx, dwt_step, idwt_step, wavedec, DwtConfig, Extension, Wavelet};
pub use peaks::{
    detect_peaks, enforce_min_distance, local_maxima, prominence, reject_extreme_peaks, PeakParams,
    PeakSet,
};

pub const SEGMENT_LEN: usize = 110;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub subject_id: String,
    pub peak_index: usize,
}

/// Row-major `rows × cols` matrix of unit-range segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatrix {
    cols: usize,
    values: Vec<f64>,
    provenance: Vec<Provenance>,
}

impl SegmentMatrix {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            values: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, provenance: Vec<Provenance>) -> Result<Self> {
        if rows.len() != provenance.len() {
            return Err(Error::shape("provenance must have one entry per row"));
        }
        let cols = rows.first().map_or(SEGMENT_LEN, Vec::len);
        let mut m = Self::new(cols);
        for (row, prov) in rows.into_iter().zip(provenance) {
            m.push(&row, prov)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64], prov: Provenance) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::shape(format!(
                "segment row has {} values, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.values.extend_from_slice(row);
        self.provenance.push(prov);
        Ok(())
    }

    pub fn append(&mut self, other: SegmentMatrix) -> Result<()> {
        if other.rows() > 0 && other.cols != self.cols {
            return Err(Error::shape("cannot append matrices of different width"));
        }
        self.values.extend(other.values);
        self.provenance.extend(other.provenance);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.provenance.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut m = Self::new(self.cols);
        for &i in idx {
            m.values.extend_from_slice(self.row(i));
            m.provenance.push(self.provenance[i].clone());
        }
        m
    }

    /// Seeded split into `(train, holdout)` with `round(holdout_fraction · rows)`
    /// held out.
    pub fn split(&self, holdout_fraction: f64, rng: &mut Rng) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::invalid("holdout fraction must lie in [0, 1)"));
        }
        let perm = rng.permutation(self.rows());
        let n_hold = (holdout_fraction * self.rows() as f64).round() as usize;
        let (hold, train) = perm.split_at(n_hold);
        let mut train = train.to_vec();
        let mut hold = hold.to_vec();
        train.sort_unstable();
        hold.sort_unstable();
        Ok((self.select(&train), self.select(&hold)))
    }

    /// One line per row, comma-separated, no header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        for row in self.iter_rows().take(self.rows()) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn write_provenance_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["subject_id", "peak_index"])?;
        for p in &self.provenance {
            wr.write_record([p.subject_id.as_str(), &p.peak_index.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the value CSV and, optionally, its provenance sidecar.
    pub fn read_csv(values: impl Read, provenance: Option<impl Read>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(values);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("segment row {i}: bad value {f:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let prov = match provenance {
            Some(r) => {
                let mut rdr = csv::Reader::from_reader(r);
                let mut out = Vec::new();
                for rec in rdr.records() {
                    let rec = rec?;
                    let peak_index = rec
                        .get(1)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format("provenance row lacks a peak index".into()))?;
                    out.push(Provenance {
                        subject_id: rec.get(0).unwrap_or_default().to_string(),
                        peak_index,
                    });
                }
                out
            }
            None => (0..rows.len())
                .map(|i| Provenance {
                    subject_id: String::new(),
                    peak_index: i,
                })
                .collect(),
        };
        Self::from_rows(rows, prov)
    }

    pub fn save_csv(&self, values_path: impl AsRef<Path>, provenance_path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(values_path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        self.write_provenance_csv(std::fs::File::create(provenance_path)?)
    }

    pub fn load_csv(values_path: impl AsRef<Path>, provenance_path: Option<&Path>) -> Result<Self> {
        let values = std::fs::File::open(values_path)?;
        let prov = provenance_path.map(std::fs::File::open).transpose()?;
        Self::read_csv(std::io::BufReader::new(values), prov.map(std::io::BufReader::new))
    }

    /// u64 LE row count followed by row-major f64 LE values.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("segment file lacks its row count".into()))?;
        let rows = u64::from_le_bytes(b) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 || (rows == 0) != bytes.is_empty() {
            return Err(Error::Format("segment file has a partial value".into()));
        }
        let n = bytes.len() / 8;
        if rows > 0 && n % rows != 0 {
            return Err(Error::Format(format!("{n} values do not split into {rows} rows")));
        }
        let cols = if rows == 0 { SEGMENT_LEN } else { n / rows };
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            cols,
            values,
            provenance: (0..rows)
                .map(|i| Provenance {
                    subject_id: String::new(),
                    peak_index: i,
                })
                .collect(),
        })
    }
}

/// Fixed-length windows around each peak, each normalized to unit range.
/// Windows that overrun the signal, or are identically zero, are skipped.
pub fn extract_segments(
    samples: &[f64],
    peaks: &PeakSet,
    length: usize,
    center_offset: isize,
    subject_id: &str,
) -> Result<SegmentMatrix> {
    if length < 2 {
        return Err(Error::invalid("segment length must be at least 2"));
    }
    let before = (length / 2) as isize;
    let mut m = SegmentMatrix::new(length);
    for &p in &peaks.indices {
        let start = p as isize - before + center_offset;
        if start < 0 || start as usize + length > samples.len() {
            continue;
        }
        let start = start as usize;
        if let Ok(row) = unit_range_normalize(&samples[start..start + length]) {
            m.push(
                &row,
                Provenance {
                    subject_id: subject_id.to_string(),
                    peak_index: p,
                },
            )?;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub dwt: DwtConfig,
    pub min_spacing_s: f64,
    pub min_prominence: f64,
    pub height_outlier_z: f64,
    pub length: usize,
    pub center_offset: isize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            dwt: DwtConfig::default(),
            min_spacing_s: PeakParams::DEFAULT_MIN_SPACING_S,
            min_prominence: 0.2,
            height_outlier_z: 3.0,
            length: SEGMENT_LEN,
            center_offset: 0,
        }
    }
}

impl SegmentConfig {
    pub fn peak_params(&self, effective_rate_hz: f64) -> PeakParams {
        PeakParams {
            min_prominence: self.min_prominence,
            height_outlier_z: self.height_outlier_z,
            ..PeakParams::for_rate(effective_rate_hz, self.min_spacing_s)
        }
    }
}

/// Intermediate products of [`segment_signal`].
#[derive(Clone, Debug)]
pub struct SegmentTrace {
    pub envelope: Vec<f64>,
    pub effective_rate_hz: f64,
    pub peaks: PeakSet,
    pub segments: SegmentMatrix,
}

/// DWT approximation → unit range → peaks → outlier rejection → windows,
/// applied to an already preprocessed signal at `rate_hz`.
pub fn segment_signal(samples: &[f64], rate_hz: u32, cfg: &SegmentConfig, subject_id: &str) -> Result<SegmentTrace> {
    let approx = dwt_approx(samples, &cfg.dwt)?;
    let envelope = unit_range_normalize(&approx)?;
    let effective_rate_hz = rate_hz as f64 / (1u64 << cfg.dwt.level) as f64;
    let params = cfg.peak_params(effective_rate_hz);
    params.validate()?;
    let found = detect_peaks(&envelope, &params);
    let peaks = reject_extreme_peaks(&found, params.height_outlier_z);
    let segments = extract_segments(&envelope, &peaks, cfg.length, cfg.center_offset, subject_id)?;
    Ok(SegmentTrace {
        envelope,
        effective_rate_hz,
        peaks,
        segments,
    })
}

/// Unit-amplitude sinusoid rows with random phase and a period drawn from
/// `period_range` samples.
pub fn sine_corpus(rows: usize, length: usize, period_range: (f64, f64), seed: u64) -> Result<SegmentMatrix> {
    let (lo, hi) = period_range;
    if !(lo > 2.0 && lo <= hi) {
        return Err(Error::invalid("sine periods must satisfy 2 < lo <= hi"));
    }
    let mut rng = Rng::new(seed);
    let mut m = SegmentMatrix::new(length);
    for r in 0..rows {
        let period = rng.uniform_range(lo, hi);
        let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
        let row: Vec<f64> = (0..length)
            .map(|t| (std::f64::consts::TAU * t as f64 / period + phase).sin())
            .collect();
        let row = unit_range_normalize(&row)?;
        m.push(
            &row,
            Provenance {
                subject_id: "sine".into(),
                peak_index: r,
            },
        )?;
    }
    Ok(m)
}
