//! Daubechies discrete wavelet transform via the Mallat pyramid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DB2: [f64; 4] = [
    0.48296291314453414337,
    0.83651630373780790558,
    0.22414386804201338103,
    -0.12940952255126038117,
];

const DB4: [f64; 8] = [
    0.23037781330889650086,
    0.71484657055291564709,
    0.63088076792985890788,
    -0.027983769416859854211,
    -0.18703481171909308408,
    0.030841381835560763627,
    0.032883011666885199735,
    -0.010597401785069032105,
];

const DB8: [f64; 16] = [
    0.054415842243104009955,
    0.31287159091429997066,
    0.67563073629728980681,
    0.58535468365420671277,
    -0.015829105256349305667,
    -0.28401554296154692652,
    0.00047248457391328277036,
    0.12874742662047845886,
    -0.01736930100180754617,
    -0.044088253930794751507,
    0.013981027917398281649,
    0.0087460940474057767164,
    -0.0048703529934515743104,
    -0.0003917403733769470463,
    0.00067544940645056936637,
    -0.00011747678412476953373,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelet {
    Db2,
    Db4,
    Db8,
}

impl Wavelet {
    /// Scaling (reconstruction low-pass) filter.
    pub fn scaling_filter(self) -> &'static [f64] {
        match self {
            Wavelet::Db2 => &DB2,
            Wavelet::Db4 => &DB4,
            Wavelet::Db8 => &DB8,
        }
    }

    /// Quadrature mirror `g[k] = (-1)^k h[L-1-k]`.
    pub fn wavelet_filter(self) -> Vec<f64> {
        let h = self.scaling_filter();
        let l = h.len();
        (0..l)
            .map(|k| if k % 2 == 0 { h[l - 1 - k] } else { -h[l - 1 - k] })
            .collect()
    }

    pub fn filter_len(self) -> usize {
        self.scaling_filter().len()
    }
}

impl std::str::FromStr for Wavelet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "db2" => Ok(Wavelet::Db2),
            "db4" => Ok(Wavelet::Db4),
            "db8" => Ok(Wavelet::Db8),
            other => Err(Error::invalid(format!("unknown wavelet {other:?}"))),
        }
    }
}

/// Boundary handling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    /// Half-sample mirror; `floor((N + L - 1) / 2)` coefficients per level.
    Symmetric,
    /// Circular wrap; `N / 2` coefficients, N must be even. Orthogonal.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwtConfig {
    pub wavelet: Wavelet,
    pub level: usize,
}

impl Default for DwtConfig {
    fn default() -> Self {
        Self {
            wavelet: Wavelet::Db4,
            level: 2,
        }
    }
}

impl DwtConfig {
    pub fn min_input_len(&self) -> usize {
        self.wavelet.filter_len() << self.level
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.level == 0 {
            return Err(Error::invalid("DWT level must be at least 1"));
        }
        if n < self.min_input_len() {
            return Err(Error::invalid(format!(
                "signal of {n} samples too short for {:?} at level {} (needs {})",
                self.wavelet,
                self.level,
                self.min_input_len()
            )));
        }
        Ok(())
    }
}

fn mirror(n: isize, len: usize) -> usize {
    let len = len as isize;
    let period = 2 * len;
    let m = n.rem_euclid(period);
    (if m < len { m } else { period - 1 - m }) as usize
}

/// Single analysis level: `(approximation, detail)`.
pub fn dwt_step(x: &[f64], wavelet: Wavelet, ext: Extension) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = wavelet.scaling_filter();
    let g = wavelet.wavelet_filter();
    let l = h.len();
    let n = x.len();
    if n == 0 {
        return Err(Error::invalid("empty signal"));
    }
    match ext {
        Extension::Symmetric => {
            let out = (n + l - 1) / 2;
            let mut a = vec![0.0; out];
            let mut d = vec![0.0; out];
            for i in 0..out {
                let base = 2 * i as isize + 2 - l as isize;
                let (mut sa, mut sd) = (0.0, 0.0);
                for j in 0..l {
                    let v = x[mirror(base + j as isize, n)];
                    sa += h[j] * v;
                    sd += g[j] * v;
                }
                a[i] = sa;
                d[i] = sd;
            }
            Ok((a, d))
        }
        Extension::Periodic => {
            if n % 2 != 0 {
                return Err(Error::invalid("periodic DWT needs an even-length signal"));
            }
            let out = n / 2;
            let mut a = vec![0.0; out];
            let mut d = vec![0.0; out];
            for i in 0..out {
                let (mut sa, mut sd) = (0.0, 0.0);
                for j in 0..l {
                    let v = x[(2 * i + j) % n];
                    sa += h[j] * v;
                    sd += g[j] * v;
                }
                a[i] = sa;
                d[i] = sd;
            }
            Ok((a, d))
        }
    }
}

/// Single synthesis level producing `out_len` samples.
pub fn idwt_step(
    approx: &[f64],
    detail: &[f64],
    wavelet: Wavelet,
    ext: Extension,
    out_len: usize,
) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::shape(format!(
            "approximation has {} coefficients, detail {}",
            approx.len(),
            detail.len()
        )));
    }
    let h = wavelet.scaling_filter();
    let g = wavelet.wavelet_filter();
    let l = h.len();
    let mut x = vec![0.0; out_len];
    match ext {
        Extension::Symmetric => {
            if approx.len() != (out_len + l - 1) / 2 {
                return Err(Error::shape("coefficient count does not match output length"));
            }
            for (i, (&a, &d)) in approx.iter().zip(detail).enumerate() {
                let base = 2 * i as isize + 2 - l as isize;
                for j in 0..l {
                    let m = base + j as isize;
                    if (0..out_len as isize).contains(&m) {
                        x[m as usize] += h[j] * a + g[j] * d;
                    }
                }
            }
        }
        Extension::Periodic => {
            if out_len != 2 * approx.len() {
                return Err(Error::shape("periodic synthesis needs out_len = 2 · coefficients"));
            }
            for (i, (&a, &d)) in approx.iter().zip(detail).enumerate() {
                for j in 0..l {
                    x[(2 * i + j) % out_len] += h[j] * a + g[j] * d;
                }
            }
        }
    }
    Ok(x)
}

/// Multilevel decomposition: final approximation plus details, coarsest last.
pub fn wavedec(x: &[f64], cfg: &DwtConfig, ext: Extension) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    cfg.validate(x.len())?;
    if ext == Extension::Periodic && x.len() % (1 << cfg.level) != 0 {
        return Err(Error::invalid(format!(
            "periodic DWT at level {} needs a length divisible by {}",
            cfg.level,
            1 << cfg.level
        )));
    }
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(cfg.level);
    for _ in 0..cfg.level {
        let (a, d) = dwt_step(&approx, cfg.wavelet, ext)?;
        approx = a;
        details.push(d);
    }
    Ok((approx, details))
}

/// Level-`cfg.level` approximation with symmetric boundaries.
pub fn dwt_approx(x: &[f64], cfg: &DwtConfig) -> Result<Vec<f64>> {
    cfg.validate(x.len())?;
    let mut approx = x.to_vec();
    for _ in 0..cfg.level {
        approx = dwt_step(&approx, cfg.wavelet, Extension::Symmetric)?.0;
    }
    Ok(approx)
}
