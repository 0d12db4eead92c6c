//! Two-sample distances: kernel MMD on vectors and histogram JSD on values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over distinct pairs of the pooled set. Falls back
/// to the mean positive distance when more than half the pairs coincide.
pub fn median_pairwise_distance(points: &[&[f64]]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(points[i], points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if median > 0.0 {
        return median;
    }
    let pos: Vec<f64> = d.into_iter().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        0.0
    } else {
        pos.iter().sum::<f64>() / pos.len() as f64
    }
}

/// Biased (V-statistic) squared MMD with an RBF kernel.
pub fn mmd2<X: AsRef<[f64]>, Y: AsRef<[f64]>>(xs: &[X], ys: &[Y], cfg: &MmdConfig) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::invalid("MMD needs two non-empty samples"));
    }
    let dim = xs[0].as_ref().len();
    if xs.iter().map(AsRef::as_ref).chain(ys.iter().map(AsRef::as_ref)).any(|v| v.len() != dim) {
        return Err(Error::shape("MMD inputs must share one dimensionality"));
    }
    let sigma = match cfg.bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 => s,
        Bandwidth::Fixed(s) => return Err(Error::invalid(format!("bandwidth {s} must be positive"))),
        Bandwidth::MedianHeuristic => {
            let pooled: Vec<&[f64]> = xs.iter().map(AsRef::as_ref).chain(ys.iter().map(AsRef::as_ref)).collect();
            let s = median_pairwise_distance(&pooled);
            if s > 0.0 {
                s
            } else {
                return Ok(0.0);
            }
        }
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let mean_kernel = |a: &[&[f64]], b: &[&[f64]]| -> f64 {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += (-gamma * sq_dist(u, v)).exp();
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let x: Vec<&[f64]> = xs.iter().map(AsRef::as_ref).collect();
    let y: Vec<&[f64]> = ys.iter().map(AsRef::as_ref).collect();
    Ok(mean_kernel(&x, &x) + mean_kernel(&y, &y) - 2.0 * mean_kernel(&x, &y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsdHistogram {
    pub bin_edges: Vec<f64>,
    pub p_mass: Vec<f64>,
    pub q_mass: Vec<f64>,
}

impl JsdHistogram {
    /// Equal-width bins over the pooled range; the top edge is inclusive.
    pub fn build(x: &[f64], y: &[f64], bins: usize) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::invalid("JSD needs two non-empty samples"));
        }
        if bins == 0 {
            return Err(Error::invalid("JSD needs at least one bin"));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("JSD inputs must be finite"));
        }
        let lo = x.iter().chain(y).copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().chain(y).copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let bin_of = |v: f64| -> usize {
            if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            }
        };
        let mass = |vals: &[f64]| -> Vec<f64> {
            let mut m = vec![0.0; bins];
            for &v in vals {
                m[bin_of(v)] += 1.0;
            }
            let n = vals.len() as f64;
            m.iter_mut().for_each(|c| *c /= n);
            m
        };
        Ok(Self {
            bin_edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
            p_mass: mass(x),
            q_mass: mass(y),
        })
    }

    pub fn divergence(&self) -> f64 {
        jsd_from_masses(&self.p_mass, &self.q_mass)
    }
}

/// Base-2 Jensen–Shannon divergence of two probability vectors.
pub fn jsd_from_masses(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        let term = |v: f64| if v > 0.0 { 0.5 * v * (v / m).log2() } else { 0.0 };
        // a single commutative add keeps jsd(p, q) == jsd(q, p) bit for bit
        s += term(a) + term(b);
    }
    s.clamp(0.0, 1.0)
}

pub fn jsd(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    Ok(JsdHistogram::build(x, y, bins)?.divergence())
}
