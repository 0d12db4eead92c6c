//! μ-law companding between amplitudes in `[-1, 1]` and categorical bins.

use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: usize = 256;

pub fn mu_law_compress(x: f64, levels: usize) -> f64 {
    let mu = (levels - 1) as f64;
    x.signum() * (mu * x.abs()).ln_1p() / mu.ln_1p()
}

pub fn mu_law_expand(y: f64, levels: usize) -> f64 {
    let mu = (levels - 1) as f64;
    y.signum() * ((1.0 + mu).powf(y.abs()) - 1.0) / mu
}

pub fn mu_law_encode(x: f64, levels: usize) -> Result<usize> {
    if !(x.abs() <= 1.0) {
        return Err(Error::invalid(format!("mu-law input {x} outside [-1, 1]")));
    }
    if x == 0.0 {
        return Ok(levels / 2);
    }
    let y = mu_law_compress(x, levels);
    let bin = ((y + 1.0) / 2.0 * levels as f64).floor();
    Ok((bin.max(0.0) as usize).min(levels - 1))
}

/// Amplitude at the centre of `bin`.
pub fn mu_law_decode(bin: usize, levels: usize) -> f64 {
    let y = (bin as f64 + 0.5) / levels as f64 * 2.0 - 1.0;
    mu_law_expand(y, levels)
}
