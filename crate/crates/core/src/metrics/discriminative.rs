//! Post-hoc real-vs-synthetic classification with a small recurrent network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::bce_with_logits;
use crate::nn::{AdamConfig, AdamState, Dense, Lstm, LstmStepCache, ModelParams, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminativeConfig {
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub holdout_fraction: f64,
    pub min_rows_per_class: usize,
    pub seed: u64,
}

impl Default for DiscriminativeConfig {
    fn default() -> Self {
        Self {
            hidden: 20,
            lr: 0.01,
            batch: 64,
            epochs: 50,
            holdout_fraction: 0.2,
            min_rows_per_class: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeResult {
    pub accuracy: f64,
    pub epochs_used: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

/// LSTM over the scalar sequence, logit from the final hidden state.
#[derive(Clone, Debug)]
pub struct SequenceClassifier {
    pub lstm: Lstm,
    pub head: Dense,
}

impl SequenceClassifier {
    pub fn new(hidden: usize) -> Self {
        Self {
            lstm: Lstm::new("clf.lstm", 1, hidden),
            head: Dense::new("clf.head", hidden, 1),
        }
    }

    pub fn init(&self, rng: &mut Rng) -> Result<ModelParams> {
        let mut p = ModelParams::new();
        self.lstm.init(&mut p, rng)?;
        self.head.init(&mut p, rng)?;
        Ok(p)
    }

    fn run(&self, params: &ModelParams, seqs: &[&[f64]]) -> Result<(Vec<f64>, Vec<LstmStepCache>, Vec<f64>)> {
        let batch = seqs.len();
        let len = seqs.first().map_or(0, |s| s.len());
        if len == 0 || seqs.iter().any(|s| s.len() != len) {
            return Err(Error::shape("classifier inputs must be non-empty and of equal length"));
        }
        let mut state = self.lstm.zero_state(batch);
        let mut caches = Vec::with_capacity(len);
        let mut x = vec![0.0; batch];
        for t in 0..len {
            for (xi, s) in x.iter_mut().zip(seqs) {
                *xi = s[t];
            }
            let (next, cache) = self.lstm.step(params, &x, batch, &state)?;
            caches.push(cache);
            state = next;
        }
        let logits = self.head.forward(params, &state.h, batch);
        Ok((logits, caches, state.h))
    }

    pub fn logits(&self, params: &ModelParams, seqs: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(self.run(params, seqs)?.0)
    }

    /// Mean BCE and its parameter gradients.
    pub fn loss_and_grads(&self, params: &ModelParams, seqs: &[&[f64]], labels: &[f64]) -> Result<(f64, ModelParams)> {
        let batch = seqs.len();
        let (logits, caches, h_last) = self.run(params, seqs)?;
        let (loss, dlogit) = bce_with_logits(&logits, labels);
        let mut grads = params.zeros_like();
        let mut dh = self.head.backward(params, &mut grads, &h_last, batch, &dlogit);
        let mut dc = vec![0.0; dh.len()];
        for cache in caches.iter().rev() {
            let (_, dh_prev, dc_prev) = self.lstm.step_backward(params, &mut grads, cache, &dh, &dc);
            dh = dh_prev;
            dc = dc_prev;
        }
        Ok((loss, grads))
    }
}

/// Held-out accuracy of a classifier trained to separate `real` (label 1)
/// from `synth` (label 0). The larger set is subsampled to balance classes.
pub fn discriminative_score<R: AsRef<[f64]>, S: AsRef<[f64]>>(
    real: &[R],
    synth: &[S],
    cfg: &DiscriminativeConfig,
) -> Result<DiscriminativeResult> {
    let per_class = real.len().min(synth.len());
    if per_class < cfg.min_rows_per_class {
        return Err(Error::InsufficientData(format!(
            "{} real and {} synthetic rows; need at least {} of each",
            real.len(),
            synth.len(),
            cfg.min_rows_per_class
        )));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) || cfg.batch == 0 {
        return Err(Error::invalid("holdout fraction must lie in [0, 1) and batch be positive"));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut pick = |n: usize| -> Vec<usize> {
        let mut p = rng.permutation(n);
        p.truncate(per_class);
        p.sort_unstable();
        p
    };
    let real_idx = pick(real.len());
    let synth_idx = pick(synth.len());
    let mut rows: Vec<(&[f64], f64)> = real_idx
        .iter()
        .map(|&i| (real[i].as_ref(), 1.0))
        .chain(synth_idx.iter().map(|&i| (synth[i].as_ref(), 0.0)))
        .collect();
    rng.shuffle(&mut rows);
    let n_test = (cfg.holdout_fraction * rows.len() as f64).round() as usize;
    let (test, train) = rows.split_at(n_test);

    let model = SequenceClassifier::new(cfg.hidden);
    let mut params = model.init(&mut rng.derive(1))?;
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let seqs: Vec<&[f64]> = chunk.iter().map(|&i| train[i].0).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| train[i].1).collect();
            let (_, grads) = model.loss_and_grads(&params, &seqs, &labels)?;
            adam.step(&mut params, &grads)?;
        }
    }
    let eval_rows = if test.is_empty() { train } else { test };
    let mut correct = 0usize;
    for chunk in eval_rows.chunks(256) {
        let seqs: Vec<&[f64]> = chunk.iter().map(|r| r.0).collect();
        let logits = model.logits(&params, &seqs)?;
        correct += logits
            .iter()
            .zip(chunk)
            .filter(|(&z, r)| (z > 0.0) == (r.1 > 0.5))
            .count();
    }
    Ok(DiscriminativeResult {
        accuracy: correct as f64 / eval_rows.len() as f64,
        epochs_used: cfg.epochs,
        train_rows: train.len(),
        test_rows: test.len(),
    })
}
