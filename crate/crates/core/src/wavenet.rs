//! Autoregressive dilated causal convolution model over μ-law bins.
//!
//! Input `[1 × T]` amplitudes pass through a 1×1 embedding, a stack of gated
//! residual blocks whose skip outputs are summed, and a ReLU → 1×1 → ReLU →
//! 1×1 head producing per-step logits over the quantization bins. Position `t`
//! predicts the bin of sample `t + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{forecast_metrics, ForecastMetrics};
use crate::nn::activations::{relu, relu_backward};
use crate::nn::loss::{softmax_columns, softmax_cross_entropy};
use crate::nn::mulaw::{mu_law_decode, mu_law_encode};
use crate::nn::{
    argmax, sample_categorical, AdamConfig, AdamState, Conv1d, Gated, LossCurve, ModelParams, Padding, Rng,
};
use crate::segment::SegmentMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DilationSchedule {
    /// `base^i` for layer `i`.
    Exponential { base: usize },
    Constant { dilation: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveNetConfig {
    pub layers: usize,
    pub kernel: usize,
    pub dilations: DilationSchedule,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub quantization_levels: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    /// Samples predicted at the end of each evaluation row.
    pub forecast_tail: usize,
    /// Sampled rollouts per row for interval coverage.
    pub coverage_paths: usize,
    pub seed: u64,
}

impl Default for WaveNetConfig {
    fn default() -> Self {
        Self {
            layers: 7,
            kernel: 2,
            dilations: DilationSchedule::Exponential { base: 2 },
            residual_channels: 89,
            skip_channels: 199,
            quantization_levels: 256,
            horizon: 14,
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            holdout_fraction: 0.2,
            forecast_tail: 22,
            coverage_paths: 100,
            seed: 0,
        }
    }
}

impl WaveNetConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// Narrower stack trained longer with small batches; sized to train and
    /// evaluate on a few hundred rows in minutes on one core.
    pub fn desk() -> Self {
        Self {
            residual_channels: 32,
            skip_channels: 64,
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-2,
            ..Self::default()
        }
    }

    pub fn dilation(&self, layer: usize) -> usize {
        match self.dilations {
            DilationSchedule::Exponential { base } => base.pow(layer as u32),
            DilationSchedule::Constant { dilation } => dilation,
        }
    }

    pub fn receptive_field(&self) -> usize {
        1 + (0..self.layers).map(|l| self.dilation(l) * (self.kernel - 1)).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.kernel < 2 || self.residual_channels == 0 || self.skip_channels == 0 {
            return Err(Error::invalid("wavenet needs layers ≥ 1, kernel ≥ 2 and non-zero widths"));
        }
        if (0..self.layers).any(|l| self.dilation(l) == 0) {
            return Err(Error::invalid("dilations must be positive"));
        }
        if self.quantization_levels < 2 {
            return Err(Error::invalid("need at least two quantization levels"));
        }
        if self.receptive_field() < self.horizon {
            return Err(Error::invalid(format!(
                "receptive field {} is shorter than the horizon {}",
                self.receptive_field(),
                self.horizon
            )));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout_fraction must lie in (0, 1)"));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::invalid("batch size and learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Block {
    dilated: Conv1d,
    residual: Conv1d,
    skip: Conv1d,
}

#[derive(Clone, Debug)]
pub struct WaveNet {
    pub config: WaveNetConfig,
    input: Conv1d,
    blocks: Vec<Block>,
    head1: Conv1d,
    head2: Conv1d,
}

struct BlockTrace {
    input: Vec<f64>,
    gated: Gated,
}

struct Trace {
    t: usize,
    x: Vec<f64>,
    blocks: Vec<BlockTrace>,
    skip_sum: Vec<f64>,
    head1_in: Vec<f64>,
    head1_out: Vec<f64>,
    head2_in: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForecastMode {
    Greedy,
    Sample,
}

impl WaveNet {
    pub fn new(config: WaveNetConfig) -> Result<Self> {
        config.validate()?;
        let r = config.residual_channels;
        let s = config.skip_channels;
        let blocks = (0..config.layers)
            .map(|l| Block {
                dilated: Conv1d::new(
                    format!("wavenet.block{l:02}.dilated"),
                    r,
                    2 * r,
                    config.kernel,
                    config.dilation(l),
                    Padding::Causal,
                ),
                residual: Conv1d::pointwise(format!("wavenet.block{l:02}.residual"), r, r),
                skip: Conv1d::pointwise(format!("wavenet.block{l:02}.skip"), r, s),
            })
            .collect();
        Ok(Self {
            input: Conv1d::pointwise("wavenet.input", 1, r),
            blocks,
            head1: Conv1d::pointwise("wavenet.head1", s, s),
            head2: Conv1d::pointwise("wavenet.head2", s, config.quantization_levels),
            config,
        })
    }

    fn layers(&self) -> impl Iterator<Item = &Conv1d> {
        std::iter::once(&self.input)
            .chain(self.blocks.iter().flat_map(|b| [&b.dilated, &b.residual, &b.skip]))
            .chain([&self.head1, &self.head2])
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(Conv1d::num_params).sum()
    }

    pub fn receptive_field(&self) -> usize {
        self.config.receptive_field()
    }

    pub fn build(&self, rng: &mut Rng) -> Result<ModelParams> {
        let mut p = ModelParams::new();
        for layer in self.layers() {
            layer.init(&mut p, rng)?;
        }
        Ok(p)
    }

    /// Runs the stack; head layers are evaluated on positions `p0..t` only.
    fn forward_trace(&self, params: &ModelParams, x: &[f64], p0: usize) -> (Trace, Vec<f64>) {
        let t = x.len();
        let r = self.config.residual_channels;
        let width = t - p0;
        let mut h = self.input.forward(params, x, t);
        let mut skip_sum = vec![0.0; self.config.skip_channels * width];
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let last = self.blocks.len() - 1;
        for (l, b) in self.blocks.iter().enumerate() {
            let z = b.dilated.forward(params, &h, t);
            let gated = Gated::forward(&z[..r * t], &z[r * t..]);
            let skip = b.skip.forward_range(params, &gated.out, t, p0, t);
            skip_sum.iter_mut().zip(&skip).for_each(|(s, v)| *s += v);
            let next = if l < last {
                let res = b.residual.forward(params, &gated.out, t);
                Some(h.iter().zip(&res).map(|(a, b)| a + b).collect::<Vec<f64>>())
            } else {
                None
            };
            blocks.push(BlockTrace { input: h, gated });
            if let Some(n) = next {
                h = n;
            } else {
                h = Vec::new();
            }
        }
        let head1_in = relu(&skip_sum);
        let head1_out = self.head1.forward(params, &head1_in, width);
        let head2_in = relu(&head1_out);
        let logits = self.head2.forward(params, &head2_in, width);
        let trace = Trace {
            t,
            x: x.to_vec(),
            blocks,
            skip_sum,
            head1_in,
            head1_out,
            head2_in,
        };
        (trace, logits)
    }

    /// Logits `[levels × T]` for an input sequence.
    pub fn logits(&self, params: &ModelParams, x: &[f64]) -> Vec<f64> {
        self.forward_trace(params, x, 0).1
    }

    /// Logits for the final position only.
    pub fn last_logits(&self, params: &ModelParams, x: &[f64]) -> Vec<f64> {
        let window = &x[x.len().saturating_sub(self.receptive_field())..];
        self.forward_trace(params, window, window.len() - 1).1
    }

    fn backward(&self, params: &ModelParams, grads: &mut ModelParams, tr: &Trace, d_logits: &[f64]) {
        let t = tr.t;
        let r = self.config.residual_channels;
        let d_head2_in = self.head2.backward(params, grads, &tr.head2_in, t, d_logits);
        let d_head1_out = relu_backward(&d_head2_in, &tr.head1_out);
        let d_head1_in = self.head1.backward(params, grads, &tr.head1_in, t, &d_head1_out);
        let d_skip = relu_backward(&d_head1_in, &tr.skip_sum);
        let mut dh = vec![0.0; r * t];
        for (l, (b, bt)) in self.blocks.iter().zip(&tr.blocks).enumerate().rev() {
            let mut dg = b.skip.backward(params, grads, &bt.gated.out, t, &d_skip);
            if l + 1 < self.blocks.len() {
                let from_res = b.residual.backward(params, grads, &bt.gated.out, t, &dh);
                dg.iter_mut().zip(&from_res).for_each(|(a, v)| *a += v);
            }
            let (da, db) = bt.gated.backward(&dg);
            let dz = [da, db].concat();
            let from_conv = b.dilated.backward(params, grads, &bt.input, t, &dz);
            dh.iter_mut().zip(&from_conv).for_each(|(a, v)| *a += v);
        }
        self.input.backward(params, grads, &tr.x, t, &dh);
    }

    /// Bins of `row[1..]`, the teacher-forcing targets.
    pub fn targets(&self, row: &[f64]) -> Result<Vec<usize>> {
        row[1..]
            .iter()
            .map(|&v| mu_law_encode(v.clamp(-1.0, 1.0), self.config.quantization_levels))
            .collect()
    }

    /// Mean next-sample cross-entropy over the rows, and its gradient.
    pub fn loss_and_grads(&self, params: &ModelParams, rows: &[&[f64]]) -> Result<(f64, ModelParams)> {
        let mut grads = params.zeros_like();
        let mut total = 0.0;
        let q = self.config.quantization_levels;
        for row in rows {
            if row.len() < 2 {
                return Err(Error::invalid("training rows need at least two samples"));
            }
            let input = &row[..row.len() - 1];
            let targets = self.targets(row)?;
            let (trace, logits) = self.forward_trace(params, input, 0);
            let (loss, mut d_logits) = softmax_cross_entropy(&logits, q, input.len(), &targets);
            d_logits.iter_mut().for_each(|g| *g /= rows.len() as f64);
            self.backward(params, &mut grads, &trace, &d_logits);
            total += loss;
        }
        Ok((total / rows.len() as f64, grads))
    }

    /// Teacher-forced training; one loss-curve row per epoch.
    pub fn train(&self, params: &mut ModelParams, corpus: &SegmentMatrix) -> Result<LossCurve> {
        if corpus.rows() == 0 || corpus.cols() < 2 {
            return Err(Error::InsufficientData("wavenet needs rows of at least two samples".into()));
        }
        let cfg = &self.config;
        let mut rng = Rng::new(cfg.seed).derive(0x7261_696e);
        let mut adam = AdamState::new(params, AdamConfig::with_lr(cfg.learning_rate));
        let mut curve = LossCurve::new(&["epoch", "mean_loss"]);
        let mut order: Vec<usize> = (0..corpus.rows()).collect();
        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                let rows: Vec<&[f64]> = chunk.iter().map(|&i| corpus.row(i)).collect();
                let (loss, grads) = self.loss_and_grads(params, &rows)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged(format!("loss {loss} at epoch {epoch}")));
                }
                adam.step(params, &grads)?;
                sum += loss * rows.len() as f64;
                batches += rows.len();
            }
            curve.push(epoch, vec![sum / batches as f64]);
        }
        Ok(curve)
    }

    /// Bin probabilities for the sample after `history`.
    pub fn next_distribution(&self, params: &ModelParams, history: &[f64]) -> Vec<f64> {
        let logits = self.last_logits(params, history);
        softmax_columns(&logits, self.config.quantization_levels, 1)
    }

    /// Autoregressive rollout of `horizon` samples, each fed back as its bin centre.
    pub fn forecast(
        &self,
        params: &ModelParams,
        history: &[f64],
        horizon: usize,
        mode: ForecastMode,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(Error::invalid("forecast needs at least one history sample"));
        }
        let q = self.config.quantization_levels;
        let mut seq = history.to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let probs = self.next_distribution(params, &seq);
            let bin = match mode {
                ForecastMode::Greedy => argmax(&probs),
                ForecastMode::Sample => sample_categorical(&probs, rng),
            };
            let v = mu_law_decode(bin, q);
            out.push(v);
            seq.push(v);
        }
        Ok(out)
    }

    /// Predicts the last `forecast_tail` samples of a row in chunks of at
    /// most `horizon`, re-conditioning on the true values between chunks.
    pub fn forecast_tail(
        &self,
        params: &ModelParams,
        row: &[f64],
        mode: ForecastMode,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        let tail = self.config.forecast_tail;
        if tail == 0 || tail >= row.len() || self.config.horizon == 0 {
            return Err(Error::invalid(format!(
                "cannot forecast the last {tail} of {} samples with horizon {}",
                row.len(),
                self.config.horizon
            )));
        }
        let mut out = Vec::with_capacity(tail);
        let mut start = row.len() - tail;
        while start < row.len() {
            let steps = self.config.horizon.min(row.len() - start);
            out.extend(self.forecast(params, &row[..start], steps, mode, rng)?);
            start += steps;
        }
        Ok(out)
    }
}

/// Point forecasts are greedy; coverage uses `coverage_paths` sampled
/// rollouts per row. All rows' tails are pooled.
pub fn evaluate_holdout(model: &WaveNet, params: &ModelParams, rows: &SegmentMatrix) -> Result<ForecastMetrics> {
    evaluate_with(rows, model.config.forecast_tail, model.config.coverage_paths, model.config.seed, |row, mode, rng| {
        model.forecast_tail(params, row, mode, rng)
    })
}

/// Evaluation harness over any tail forecaster.
pub fn evaluate_with<F>(rows: &SegmentMatrix, tail: usize, paths: usize, seed: u64, mut forecaster: F) -> Result<ForecastMetrics>
where
    F: FnMut(&[f64], ForecastMode, &mut Rng) -> Result<Vec<f64>>,
{
    if rows.rows() == 0 {
        return Err(Error::InsufficientData("no rows to evaluate".into()));
    }
    let base = Rng::new(seed).derive(0x6576_616c);
    let mut truth = Vec::new();
    let mut point = Vec::new();
    let mut sampled = vec![Vec::new(); paths];
    for (i, row) in rows.iter_rows().enumerate() {
        let mut rng = base.derive(i as u64);
        truth.extend_from_slice(&row[row.len() - tail..]);
        point.extend(forecaster(row, ForecastMode::Greedy, &mut rng)?);
        for path in sampled.iter_mut() {
            path.extend(forecaster(row, ForecastMode::Sample, &mut rng)?);
        }
    }
    forecast_metrics(&truth, &point, &sampled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check_sampled;

    fn tiny() -> WaveNetConfig {
        WaveNetConfig {
            layers: 3,
            residual_channels: 4,
            skip_channels: 5,
            quantization_levels: 16,
            horizon: 4,
            epochs: 2,
            batch_size: 4,
            forecast_tail: 5,
            coverage_paths: 10,
            ..WaveNetConfig::default()
        }
    }

    #[test]
    fn paper_sized_parameter_count() {
        let cfg = WaveNetConfig::default();
        let (r, s, q, k) = (89, 199, 256, 2);
        let input = r + r;
        let block = (k * r * 2 * r + 2 * r) + (r * r + r) + (r * s + s);
        let head = (s * s + s) + (s * q + q);
        let closed_form = input + 7 * block + head;
        assert_eq!(closed_form, 495_652);
        assert_eq!(WaveNet::new(cfg).unwrap().num_params(), closed_form);
        let built = WaveNet::new(tiny()).unwrap();
        let p = built.build(&mut Rng::new(1)).unwrap();
        assert_eq!(p.num_values(), built.num_params());
    }

    #[test]
    fn receptive_fields() {
        assert_eq!(WaveNetConfig::default().receptive_field(), 128);
        let one = WaveNetConfig { layers: 1, horizon: 2, ..WaveNetConfig::default() };
        assert_eq!(one.receptive_field(), 2);
        let fixed = WaveNetConfig {
            dilations: DilationSchedule::Constant { dilation: 2 },
            ..WaveNetConfig::default()
        };
        assert_eq!(fixed.receptive_field(), 15);
    }

    #[test]
    fn impulse_probe_matches_receptive_field() {
        let cfg = WaveNetConfig { layers: 4, residual_channels: 3, skip_channels: 3, quantization_levels: 8, ..tiny() };
        let m = WaveNet::new(cfg).unwrap();
        let p = m.build(&mut Rng::new(2)).unwrap();
        let t = 40;
        let base = m.logits(&p, &vec![0.0; t]);
        let q = 8;
        let mut reach = 0;
        for k in 0..t {
            let mut x = vec![0.0; t];
            x[t - 1 - k] = 0.5;
            let l = m.logits(&p, &x);
            if (0..q).any(|c| l[c * t + t - 1] != base[c * t + t - 1]) {
                reach = k + 1;
            }
            // nothing before the impulse moves
            for pos in 0..t - 1 - k {
                for c in 0..q {
                    assert_eq!(l[c * t + pos], base[c * t + pos]);
                }
            }
        }
        assert_eq!(reach, m.receptive_field());
    }

    #[test]
    fn last_logits_match_full_pass() {
        let m = WaveNet::new(tiny()).unwrap();
        let p = m.build(&mut Rng::new(3)).unwrap();
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.4).sin() * 0.8).collect();
        let full = m.logits(&p, &x);
        let last = m.last_logits(&p, &x);
        for c in 0..16 {
            assert!((full[c * 30 + 29] - last[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = WaveNet::new(tiny()).unwrap();
        let p = m.build(&mut Rng::new(4)).unwrap();
        let rows: Vec<Vec<f64>> = (0..2).map(|r| (0..12).map(|i| ((i + r) as f64 * 0.7).sin() * 0.9).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let report = finite_diff_check_sampled(|q| m.loss_and_grads(q, &refs), &p, 1e-6, 6, &mut Rng::new(5)).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn training_is_deterministic_and_learns_a_constant() {
        let cfg = WaveNetConfig { epochs: 30, learning_rate: 1e-2, ..tiny() };
        let m = WaveNet::new(cfg).unwrap();
        let corpus = SegmentMatrix::from_rows(
            vec![vec![0.0; 20]],
            vec![crate::segment::Provenance { subject_id: "z".into(), peak_index: 0 }],
        )
        .unwrap();
        let mut a = m.build(&mut Rng::new(6)).unwrap();
        let mut b = a.clone();
        let ca = m.train(&mut a, &corpus).unwrap();
        let cb = m.train(&mut b, &corpus).unwrap();
        assert_eq!(ca, cb);
        let losses = ca.column(0);
        assert!(losses[losses.len() - 1] < losses[0]);
        assert!(losses[losses.len() - 1] < 0.05, "{losses:?}");
        let f = m.forecast(&a, &[0.0; 10], 5, ForecastMode::Greedy, &mut Rng::new(0)).unwrap();
        let bin_width = 2.0 / 16.0;
        assert!(f.iter().all(|v| v.abs() <= bin_width), "{f:?}");
        assert!(m.forecast(&a, &[0.0; 10], 0, ForecastMode::Greedy, &mut Rng::new(0)).unwrap().is_empty());
    }

    #[test]
    fn rolling_tail_and_oracle_metrics() {
        let m = WaveNet::new(tiny()).unwrap();
        let p = m.build(&mut Rng::new(7)).unwrap();
        let row: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).cos()).collect();
        let f = m.forecast_tail(&p, &row, ForecastMode::Sample, &mut Rng::new(1)).unwrap();
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|v| (-1.0..=1.0).contains(v)));
        let g1 = m.forecast_tail(&p, &row, ForecastMode::Greedy, &mut Rng::new(1)).unwrap();
        let g2 = m.forecast_tail(&p, &row, ForecastMode::Greedy, &mut Rng::new(99)).unwrap();
        assert_eq!(g1, g2);

        let corpus = crate::segment::sine_corpus(3, 20, (5.0, 7.0), 2).unwrap();
        let oracle = evaluate_with(&corpus, 5, 10, 0, |row, _, _| Ok(row[15..].to_vec())).unwrap();
        assert_eq!((oracle.mae, oracle.mse, oracle.smape_percent), (0.0, 0.0, 0.0));
    }
}
