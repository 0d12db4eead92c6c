//! Band-pass filtering, standardization and integer-factor decimation.
//!
//! The band-pass is a single biquad: the analog first-order Butterworth
//! low-pass prototype `1/(s+1)` mapped to a band-pass
//! `B·s / (s² + B·s + ω0²)` and discretized with the bilinear transform. Both
//! band edges are pre-warped, so the digital response is exactly 1 at the
//! frequency that maps onto `ω0 = sqrt(ωl·ωh)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandPassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: u32,
    pub sample_rate_hz: f64,
}

impl Default for BandPassSpec {
    fn default() -> Self {
        Self {
            low_hz: 40.0,
            high_hz: 400.0,
            order: 1,
            sample_rate_hz: 4000.0,
        }
    }
}

/// Biquad with `a0 = 1`:
/// `y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadCoefficients {
    /// Complex response at normalized angular frequency `omega` (rad/sample),
    /// returned as `(re, im)`.
    pub fn response(&self, omega: f64) -> (f64, f64) {
        // z^-1 = e^{-jω}
        let (c1, s1) = (omega.cos(), -omega.sin());
        let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        let num = (self.b0 + self.b1 * c1 + self.b2 * c2, self.b1 * s1 + self.b2 * s2);
        let den = (1.0 + self.a1 * c1 + self.a2 * c2, self.a1 * s1 + self.a2 * s2);
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }

    /// `|H(e^{j2πf/fs})|`.
    pub fn magnitude_at(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        let (re, im) = self.response(2.0 * PI * freq_hz / sample_rate_hz);
        re.hypot(im)
    }

    /// Magnitudes of the two poles.
    pub fn pole_radii(&self) -> [f64; 2] {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc >= 0.0 {
            let r = disc.sqrt();
            [((-self.a1 + r) / 2.0).abs(), ((-self.a1 - r) / 2.0).abs()]
        } else {
            let m = self.a2.sqrt();
            [m, m]
        }
    }

    pub fn is_stable(&self) -> bool {
        self.pole_radii().iter().all(|&r| r < 1.0)
    }
}

impl BandPassSpec {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::invalid(format!(
                "band edges {}..{} Hz must satisfy 0 < low < high < {nyquist}",
                self.low_hz, self.high_hz
            )));
        }
        if self.order != 1 {
            return Err(Error::invalid(format!(
                "only first-order band-pass designs are supported, got order {}",
                self.order
            )));
        }
        Ok(())
    }

    /// Analog frequency (Hz) whose warped image is the digital unity-gain point.
    pub fn warped_center_hz(&self) -> f64 {
        let fs = self.sample_rate_hz;
        let k = 2.0 * fs;
        let wl = k * (PI * self.low_hz / fs).tan();
        let wh = k * (PI * self.high_hz / fs).tan();
        let w0 = (wl * wh).sqrt();
        fs / PI * (w0 / k).atan()
    }
}

pub fn design_bandpass(spec: &BandPassSpec) -> Result<BiquadCoefficients> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let k = 2.0 * fs;
    let wl = k * (PI * spec.low_hz / fs).tan();
    let wh = k * (PI * spec.high_hz / fs).tan();
    let bw = wh - wl;
    let w0sq = wl * wh;
    let a0 = k * k + bw * k + w0sq;
    let b0 = bw * k / a0;
    Ok(BiquadCoefficients {
        b0,
        b1: 0.0,
        b2: -b0,
        a1: 2.0 * (w0sq - k * k) / a0,
        a2: (k * k - bw * k + w0sq) / a0,
    })
}

/// Single forward pass, zero initial state, direct form I.
pub fn apply_filter(samples: &[f64], c: &BiquadCoefficients) -> Result<Vec<f64>> {
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite input sample at {i}")));
    }
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    Ok(samples
        .iter()
        .map(|&x| {
            let y = c.b0 * x + c.b1 * x1 + c.b2 * x2 - c.a1 * y1 - c.a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            y
        })
        .collect())
}

/// Zero mean, unit population standard deviation.
pub fn standardize(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid("standardize needs at least two samples"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateSignal("zero variance".into()));
    }
    Ok(samples.iter().map(|v| (v - mean) / std).collect())
}

/// Keeps every k-th sample, `k = sample_rate_hz / target_hz`. The caller is
/// responsible for band-limiting below the new Nyquist rate first.
pub fn downsample(samples: &[f64], sample_rate_hz: u32, target_hz: u32) -> Result<(Vec<f64>, u32)> {
    if target_hz == 0 || sample_rate_hz % target_hz != 0 {
        return Err(Error::invalid(format!(
            "cannot decimate {sample_rate_hz} Hz to {target_hz} Hz by an integer factor"
        )));
    }
    let k = (sample_rate_hz / target_hz) as usize;
    Ok((samples.iter().step_by(k).copied().collect(), target_hz))
}

/// Scales by `1 / max|x|`.
pub fn unit_range_normalize(samples: &[f64]) -> Result<Vec<f64>> {
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::DegenerateSignal("signal has no non-zero samples".into()));
    }
    Ok(samples.iter().map(|v| v / peak).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub bandpass: BandPassSpec,
    pub target_rate_hz: u32,
    /// Standardize each recording on its own statistics.
    pub per_recording_standardize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass: BandPassSpec::default(),
            target_rate_hz: 800,
            per_recording_standardize: true,
        }
    }
}

/// Band-pass → standardize → downsample. Returns the signal and its new rate.
pub fn preprocess(samples: &[f64], sample_rate_hz: u32, cfg: &PreprocessConfig) -> Result<(Vec<f64>, u32)> {
    let spec = BandPassSpec {
        sample_rate_hz: sample_rate_hz as f64,
        ..cfg.bandpass.clone()
    };
    let coeffs = design_bandpass(&spec)?;
    let filtered = apply_filter(samples, &coeffs)?;
    let standardized = standardize(&filtered)?;
    downsample(&standardized, sample_rate_hz, cfg.target_rate_hz)
}

/// `.sig` layout: u64 LE sample count followed by that many f64 LE values.
pub fn write_sig(mut w: impl Write, samples: &[f64]) -> Result<()> {
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for v in samples {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_sig(mut r: impl Read) -> Result<Vec<f64>> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("signal file lacks its length prefix".into()))?;
    let n = u64::from_le_bytes(b) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("signal file is truncated".into()))?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn save_sig(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_sig(&mut w, samples)?;
    w.flush()?;
    Ok(())
}

pub fn load_sig(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    read_sig(std::io::BufReader::new(std::fs::File::open(path)?))
}
