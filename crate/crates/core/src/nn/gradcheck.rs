//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::nn::{ModelParams, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every coordinate of `params`.
///
/// `loss_fn` returns the loss and its analytic gradient; it must be a pure
/// function of the parameters (any randomness must be re-seeded per call).
pub fn finite_diff_check<F>(loss_fn: F, params: &ModelParams, epsilon: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<(f64, ModelParams)>,
{
    check(loss_fn, params, epsilon, None)
}

/// Checks up to `per_tensor` randomly chosen coordinates of each parameter.
pub fn finite_diff_check_sampled<F>(
    loss_fn: F,
    params: &ModelParams,
    epsilon: f64,
    per_tensor: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<(f64, ModelParams)>,
{
    check(loss_fn, params, epsilon, Some((per_tensor, rng)))
}

fn check<F>(
    mut loss_fn: F,
    params: &ModelParams,
    epsilon: f64,
    sample: Option<(usize, &mut Rng)>,
) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<(f64, ModelParams)>,
{
    if !(epsilon > 0.0) {
        return Err(Error::invalid("finite-difference epsilon must be positive"));
    }
    let (base, grads) = loss_fn(params)?;
    let (again, _) = loss_fn(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::CheckInvalid(format!(
            "loss is not deterministic ({base} vs {again})"
        )));
    }
    let mut coords: Vec<(String, usize)> = Vec::new();
    let mut sample = sample;
    for (name, t) in params.iter() {
        match sample.as_mut() {
            None => coords.extend((0..t.len()).map(|i| (name.clone(), i))),
            Some((k, rng)) => {
                if t.len() <= *k {
                    coords.extend((0..t.len()).map(|i| (name.clone(), i)));
                } else {
                    let mut idx = rng.permutation(t.len());
                    idx.truncate(*k);
                    idx.sort_unstable();
                    coords.extend(idx.into_iter().map(|i| (name.clone(), i)));
                }
            }
        }
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (name, i) in coords {
        let orig = probe.expect(&name).data()[i];
        probe.expect_mut(&name).data_mut()[i] = orig + epsilon;
        let (up, _) = loss_fn(&probe)?;
        probe.expect_mut(&name).data_mut()[i] = orig - epsilon;
        let (down, _) = loss_fn(&probe)?;
        probe.expect_mut(&name).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grads
            .get(&name)
            .ok_or_else(|| Error::shape(format!("no analytic gradient for {name:?}")))?
            .data()[i];
        let err = relative_error(analytic, numeric);
        if !err.is_finite() {
            return Err(Error::CheckInvalid(format!("non-finite gradient at {name}[{i}]")));
        }
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = Some((name, i));
        }
    }
    Ok(report)
}
