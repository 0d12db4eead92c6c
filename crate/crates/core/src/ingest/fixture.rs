//! Synthetic beat trains standing in for clinical recordings.
//!
//! Each heart sound is a cosine tone burst under a Gaussian envelope. S1
//! bursts sit at every beat onset `k · 60 / heart_rate_bpm`; S2 follows
//! `s1_s2_gap_s` later at 0.6× amplitude. Per-beat jitter on both burst
//! amplitudes and on the S1–S2 gap gives the corpus some spread.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Location, Outcome, Recording};
use crate::nn::Rng;

pub const FIXTURE_SAMPLE_RATE_HZ: u32 = 4000;
pub const BURST_CARRIER_HZ: f64 = 30.0;
pub const BURST_SIGMA_S: f64 = 0.025;
pub const S2_RELATIVE_AMPLITUDE: f64 = 0.6;

/// Bursts are evaluated within this many envelope widths of their centre.
const BURST_SUPPORT_SIGMAS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    pub n_recordings: usize,
    pub duration_s: f64,
    pub heart_rate_bpm: f64,
    pub s1_s2_gap_s: f64,
    pub noise_std: f64,
    /// Relative std of each burst's amplitude.
    pub amplitude_jitter: f64,
    /// Std of the S1–S2 gap, seconds.
    pub gap_jitter_s: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_recordings: 5,
            duration_s: 12.5,
            heart_rate_bpm: 60.0,
            s1_s2_gap_s: 0.2,
            noise_std: 0.0,
            amplitude_jitter: 0.1,
            gap_jitter_s: 0.01,
            seed: 7,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::invalid("fixture duration must be positive"));
        }
        if !(40.0..=200.0).contains(&self.heart_rate_bpm) {
            return Err(Error::invalid(format!(
                "heart rate {} bpm outside [40, 200]",
                self.heart_rate_bpm
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be non-negative"));
        }
        if !(self.s1_s2_gap_s >= 0.0) {
            return Err(Error::invalid("s1_s2_gap_s must be non-negative"));
        }
        if !(self.amplitude_jitter >= 0.0 && self.amplitude_jitter < 0.5) {
            return Err(Error::invalid("amplitude_jitter must lie in [0, 0.5)"));
        }
        if !(self.gap_jitter_s >= 0.0 && self.gap_jitter_s * 4.0 < self.s1_s2_gap_s.max(1e-9)) {
            return Err(Error::invalid("gap_jitter_s must be below a quarter of the S1-S2 gap"));
        }
        Ok(())
    }

    /// S1 onset times within the recording.
    pub fn s1_times(&self) -> Vec<f64> {
        let period = 60.0 / self.heart_rate_bpm;
        (0..)
            .map(|k| k as f64 * period)
            .take_while(|&t| t < self.duration_s)
            .collect()
    }
}

fn burst(t: f64, centre: f64, amplitude: f64) -> f64 {
    let dt = t - centre;
    amplitude
        * (2.0 * std::f64::consts::PI * BURST_CARRIER_HZ * dt).cos()
        * (-dt * dt / (2.0 * BURST_SIGMA_S * BURST_SIGMA_S)).exp()
}

pub fn synth_fixture(spec: &FixtureSpec) -> Result<Vec<Recording>> {
    spec.validate()?;
    let fs = FIXTURE_SAMPLE_RATE_HZ as f64;
    let n = (spec.duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::invalid("fixture duration shorter than one sample"));
    }
    let support = (BURST_SUPPORT_SIGMAS * BURST_SIGMA_S * fs).ceil() as isize;
    let base = Rng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_recordings);
    for r in 0..spec.n_recordings {
        let mut rng = base.derive(r as u64);
        let mut centres: Vec<(f64, f64)> = Vec::new();
        for t0 in spec.s1_times() {
            let a1 = 1.0 + spec.amplitude_jitter * rng.normal();
            centres.push((t0, a1));
            let gap = spec.s1_s2_gap_s + spec.gap_jitter_s * rng.normal();
            let a2 = S2_RELATIVE_AMPLITUDE * (1.0 + spec.amplitude_jitter * rng.normal());
            let t2 = t0 + gap;
            if t2 < spec.duration_s {
                centres.push((t2, a2));
            }
        }
        let mut samples = vec![0.0; n];
        for &(c, amp) in &centres {
            let mid = (c * fs).round() as isize;
            let lo = (mid - support).max(0) as usize;
            let hi = ((mid + support + 1).max(0) as usize).min(n);
            for (i, v) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                *v += burst(i as f64 / fs, c, amp);
            }
        }
        if spec.noise_std > 0.0 {
            for v in samples.iter_mut() {
                *v += spec.noise_std * rng.normal();
            }
        }
        out.push(Recording {
            subject_id: format!("fx{}_{r:03}", spec.seed),
            location: Location::Unknown,
            sample_rate_hz: FIXTURE_SAMPLE_RATE_HZ,
            samples,
            outcome: Outcome::Normal,
        });
    }
    Ok(out)
}
