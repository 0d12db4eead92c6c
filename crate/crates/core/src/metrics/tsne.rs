//! Exact (O(N²)) t-SNE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub entropy_tolerance: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 500,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 100,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            entropy_tolerance: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    /// Row-major `N × 2`.
    pub coords: Vec<[f64; 2]>,
    pub kl_initial: f64,
    pub kl_final: f64,
    pub perplexity_used: f64,
}

const MAX_SEARCH_STEPS: usize = 200;
const P_FLOOR: f64 = 1e-12;

fn pairwise_sq_dists<X: AsRef<[f64]>>(points: &[X]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points[i]
                .as_ref()
                .iter()
                .zip(points[j].as_ref())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional affinities `p(j|i)` whose entropy matches `ln(perplexity)`.
/// Rows sum to 1.
pub fn conditional_affinities(sq_dists: &[f64], n: usize, perplexity: f64, tol: f64) -> Result<Vec<f64>> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &sq_dists[i * n..(i + 1) * n];
        let d_min = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &v)| v)
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut converged = false;
        let out = &mut p[i * n..(i + 1) * n];
        for _ in 0..MAX_SEARCH_STEPS {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    out[j] = 0.0;
                    continue;
                }
                let shifted = row[j] - d_min;
                let w = (-beta * shifted).exp();
                out[j] = w;
                sum += w;
                weighted += shifted * w;
            }
            let entropy = sum.ln() + beta * weighted / sum;
            out.iter_mut().for_each(|v| *v /= sum);
            let diff = entropy - target;
            if diff.abs() < tol {
                converged = true;
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if !converged {
            return Err(Error::NumericDegeneracy(format!(
                "perplexity search did not converge for point {i} (duplicate-heavy input?)"
            )));
        }
    }
    Ok(p)
}

fn kl_and_grad(p: &[f64], y: &[[f64; 2]], exaggeration: f64, grad: &mut [[f64; 2]]) -> f64 {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        let mut g = [0.0; 2];
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            let qij = (num[i * n + j] / z).max(P_FLOOR);
            kl += pij * (pij / qij).ln();
            let coef = 4.0 * (exaggeration * pij - qij) * num[i * n + j];
            g[0] += coef * (y[i][0] - y[j][0]);
            g[1] += coef * (y[i][1] - y[j][1]);
        }
        grad[i] = g;
    }
    kl
}

pub fn tsne<X: AsRef<[f64]>>(points: &[X], cfg: &TsneConfig) -> Result<TsneResult> {
    let n = points.len();
    if n < 4 {
        return Err(Error::invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::shape("t-SNE points must share one dimensionality"));
    }
    if !(cfg.perplexity > 1.0) {
        return Err(Error::invalid("perplexity must exceed 1"));
    }
    let perplexity = cfg.perplexity.min((n - 1) as f64 / 3.0).max(1.0 + 1e-6);
    let d = pairwise_sq_dists(points);
    let cond = conditional_affinities(&d, n, perplexity, cfg.entropy_tolerance)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [1e-4 * rng.normal(), 1e-4 * rng.normal()]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0; 2]; n];
    let kl_initial = kl_and_grad(&p, &y, 1.0, &mut grad);
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };
        kl_and_grad(&p, &y, exaggeration, &mut grad);
        for i in 0..n {
            for k in 0..2 {
                let same_sign = (grad[i][k] > 0.0) == (velocity[i][k] > 0.0);
                gains[i][k] = if same_sign { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 };
                gains[i][k] = gains[i][k].max(0.01);
                velocity[i][k] = momentum * velocity[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += velocity[i][k];
            }
        }
        for k in 0..2 {
            let mean = y.iter().map(|p| p[k]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|p| p[k] -= mean);
        }
    }
    let kl_final = kl_and_grad(&p, &y, 1.0, &mut grad);
    if !kl_final.is_finite() || y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::NumericDegeneracy("t-SNE optimisation produced non-finite values".into()));
    }
    Ok(TsneResult {
        coords: y,
        kl_initial,
        kl_final,
        perplexity_used: perplexity,
    })
}
