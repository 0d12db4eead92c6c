//! Denoising diffusion over fixed-length segments: a linear Gaussian noise
//! schedule, an ε-predicting dilated convolution denoiser conditioned on the
//! step index, and ancestral sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{generative_report, GenEvalConfig, GenEvalReport};
use crate::nn::activations::{relu, relu_backward};
use crate::nn::loss::mse;
use crate::nn::{AdamConfig, AdamState, Conv1d, Dense, Gated, LossCurve, ModelParams, Padding, Rng};
use crate::segment::{Provenance, SegmentMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(50, 1e-4, 0.05).expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    /// `steps` betas evenly spaced from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid("every beta must lie in (0, 1)"));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut acc = 1.0;
        let alpha_bars = alphas
            .iter()
            .map(|a| {
                acc *= a;
                acc
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// Posterior variance `β̃_t = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)`; zero at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t == 1 {
            0.0
        } else {
            self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
        }
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// `x_t = √ᾱ_t·x0 + √(1 − ᾱ_t)·ε` with fresh `ε ~ N(0, I)`.
    pub fn forward_noise(&self, x0: &[f64], t: usize, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_step(t)?;
        if x0.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::invalid("clean samples must lie in [-1, 1]"));
        }
        let eps: Vec<f64> = x0.iter().map(|_| rng.normal()).collect();
        Ok((self.mix(x0, &eps, t), eps))
    }

    fn mix(&self, x0: &[f64], eps: &[f64], t: usize) -> Vec<f64> {
        let ab = self.alpha_bar(t);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub channels: usize,
    /// Layer `i` uses dilation `2^i`.
    pub layers: usize,
    pub kernel: usize,
    pub embed_dim: usize,
    /// Fixed sine/cosine features of the sample position fed in beside the
    /// signal. Must be even.
    #[serde(default)]
    pub positional_channels: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            layers: 4,
            kernel: 3,
            embed_dim: 64,
            positional_channels: 0,
            epochs: 30,
            batch: 32,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    /// Deeper, position-aware variant trained long enough to match the
    /// fixture corpus on one core.
    pub fn desk() -> Self {
        Self {
            layers: 5,
            positional_channels: 32,
            epochs: 300,
            lr: 2e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.channels == 0 {
            return Err(Error::invalid("denoiser needs at least one layer and one channel"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::invalid("centered convolutions need an odd kernel"));
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return Err(Error::invalid("step embedding dimension must be even and at least 2"));
        }
        if self.positional_channels % 2 != 0 {
            return Err(Error::invalid("positional channels come in sine/cosine pairs"));
        }
        if self.batch == 0 || !(self.lr > 0.0) {
            return Err(Error::invalid("batch and learning rate must be positive"));
        }
        Ok(())
    }
}

/// Sinusoidal embedding of the step index: sines then cosines at
/// frequencies `10^(−4k/(d/2 − 1))`.
pub fn step_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut e = vec![0.0; dim];
    for k in 0..half {
        let freq = if half > 1 {
            10f64.powf(-4.0 * k as f64 / (half - 1) as f64)
        } else {
            1.0
        };
        let a = t as f64 * freq;
        e[k] = a.sin();
        e[half + k] = a.cos();
    }
    e
}

#[derive(Clone, Debug)]
struct Layer {
    step: Dense,
    dilated: Conv1d,
    residual: Option<Conv1d>,
    skip: Conv1d,
}

#[derive(Clone, Debug)]
pub struct Diffusion {
    pub config: DenoiserConfig,
    pub schedule: NoiseSchedule,
    input: Conv1d,
    layers: Vec<Layer>,
    head1: Conv1d,
    head2: Conv1d,
}

struct LayerTrace {
    conv_in: Vec<f64>,
    gated: Gated,
}

struct Trace {
    len: usize,
    x: Vec<f64>,
    embed: Vec<f64>,
    input_pre: Vec<f64>,
    layers: Vec<LayerTrace>,
    skip_scaled: Vec<f64>,
    head1_in: Vec<f64>,
    head1_out: Vec<f64>,
    head2_in: Vec<f64>,
}

impl Diffusion {
    pub fn new(config: DenoiserConfig, schedule: NoiseSchedule) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let last = config.layers - 1;
        let layers = (0..config.layers)
            .map(|l| Layer {
                step: Dense::new(format!("diffusion.layer{l}.step"), config.embed_dim, c),
                dilated: Conv1d::new(
                    format!("diffusion.layer{l}.dilated"),
                    c,
                    2 * c,
                    config.kernel,
                    1 << l,
                    Padding::Centered,
                ),
                residual: (l < last).then(|| Conv1d::pointwise(format!("diffusion.layer{l}.residual"), c, c)),
                skip: Conv1d::pointwise(format!("diffusion.layer{l}.skip"), c, c),
            })
            .collect();
        Ok(Self {
            input: Conv1d::pointwise("diffusion.input", 1 + config.positional_channels, c),
            layers,
            head1: Conv1d::pointwise("diffusion.head1", c, c),
            head2: Conv1d::pointwise("diffusion.head2", c, 1),
            config,
            schedule,
        })
    }

    pub fn build(&self, rng: &mut Rng) -> Result<ModelParams> {
        let mut p = ModelParams::new();
        self.input.init(&mut p, rng)?;
        for l in &self.layers {
            l.step.init(&mut p, rng)?;
            l.dilated.init(&mut p, rng)?;
            if let Some(r) = &l.residual {
                r.init(&mut p, rng)?;
            }
            l.skip.init(&mut p, rng)?;
        }
        self.head1.init(&mut p, rng)?;
        self.head2.init(&mut p, rng)?;
        Ok(p)
    }

    fn forward_trace(&self, params: &ModelParams, x: &[f64], t: usize) -> (Trace, Vec<f64>) {
        let n = x.len();
        let c = self.config.channels;
        let embed = step_embedding(t, self.config.embed_dim);
        let x = self.with_position(x);
        let input_pre = self.input.forward(params, &x, n);
        let mut h = relu(&input_pre);
        let mut skip_sum = vec![0.0; c * n];
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let shift = l.step.forward(params, &embed, 1);
            let mut conv_in = h.clone();
            for (ch, s) in shift.iter().enumerate() {
                conv_in[ch * n..(ch + 1) * n].iter_mut().for_each(|v| *v += s);
            }
            let z = l.dilated.forward(params, &conv_in, n);
            let gated = Gated::forward(&z[..c * n], &z[c * n..]);
            let skip = l.skip.forward(params, &gated.out, n);
            skip_sum.iter_mut().zip(&skip).for_each(|(a, v)| *a += v);
            if let Some(r) = &l.residual {
                let res = r.forward(params, &gated.out, n);
                h = h.iter().zip(&res).map(|(a, b)| (a + b) * std::f64::consts::FRAC_1_SQRT_2).collect();
            }
            layers.push(LayerTrace { conv_in, gated });
        }
        let norm = 1.0 / (self.layers.len() as f64).sqrt();
        let skip_scaled: Vec<f64> = skip_sum.iter().map(|v| v * norm).collect();
        let head1_in = relu(&skip_scaled);
        let head1_out = self.head1.forward(params, &head1_in, n);
        let head2_in = relu(&head1_out);
        let eps_hat = self.head2.forward(params, &head2_in, n);
        let trace = Trace {
            len: n,
            x,
            embed,
            input_pre,
            layers,
            skip_scaled,
            head1_in,
            head1_out,
            head2_in,
        };
        (trace, eps_hat)
    }

    fn backward(&self, params: &ModelParams, grads: &mut ModelParams, tr: &Trace, d_eps: &[f64]) {
        let n = tr.len;
        let c = self.config.channels;
        let d_head2_in = self.head2.backward(params, grads, &tr.head2_in, n, d_eps);
        let d_head1_out = relu_backward(&d_head2_in, &tr.head1_out);
        let d_head1_in = self.head1.backward(params, grads, &tr.head1_in, n, &d_head1_out);
        let norm = 1.0 / (self.layers.len() as f64).sqrt();
        let d_skip: Vec<f64> = relu_backward(&d_head1_in, &tr.skip_scaled).iter().map(|g| g * norm).collect();
        let mut dh = vec![0.0; c * n];
        for (l, lt) in self.layers.iter().zip(&tr.layers).rev() {
            let mut dg = l.skip.backward(params, grads, &lt.gated.out, n, &d_skip);
            if let Some(r) = &l.residual {
                dh.iter_mut().for_each(|v| *v *= std::f64::consts::FRAC_1_SQRT_2);
                let from_res = r.backward(params, grads, &lt.gated.out, n, &dh);
                dg.iter_mut().zip(&from_res).for_each(|(a, v)| *a += v);
            }
            let (da, db) = lt.gated.backward(&dg);
            let dz = [da, db].concat();
            let d_conv_in = l.dilated.backward(params, grads, &lt.conv_in, n, &dz);
            let d_shift: Vec<f64> = d_conv_in.chunks(n).map(|row| row.iter().sum()).collect();
            l.step.accumulate_grads(grads, &tr.embed, 1, &d_shift);
            dh.iter_mut().zip(&d_conv_in).for_each(|(a, v)| *a += v);
        }
        let d_input = relu_backward(&dh, &tr.input_pre);
        self.input.backward(params, grads, &tr.x, n, &d_input);
    }

    /// The signal as channel 0 followed by `sin(πjp)`, `cos(πjp)` for
    /// `j = 1..=P/2`, where `p` runs from 0 to 1 across the row.
    fn with_position(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let pairs = self.config.positional_channels / 2;
        let mut out = Vec::with_capacity(n * (1 + 2 * pairs));
        out.extend_from_slice(x);
        let span = (n.max(2) - 1) as f64;
        for j in 1..=pairs {
            let w = std::f64::consts::PI * j as f64 / span;
            out.extend((0..n).map(|i| (w * i as f64).sin()));
            out.extend((0..n).map(|i| (w * i as f64).cos()));
        }
        out
    }

    /// Predicted noise `ε̂(x_t, t)`.
    pub fn predict_noise(&self, params: &ModelParams, x_t: &[f64], t: usize) -> Vec<f64> {
        self.forward_trace(params, x_t, t).1
    }

    /// Mean over examples of the per-sample squared ε error, and its gradient.
    /// Each example is `(x_t, t, ε)`.
    pub fn loss_and_grads(&self, params: &ModelParams, batch: &[(Vec<f64>, usize, Vec<f64>)]) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty denoiser batch"));
        }
        let mut grads = params.zeros_like();
        let mut total = 0.0;
        for (x_t, t, eps) in batch {
            self.schedule.check_step(*t)?;
            let (trace, eps_hat) = self.forward_trace(params, x_t, *t);
            let (loss, mut d) = mse(&eps_hat, eps);
            d.iter_mut().for_each(|g| *g /= batch.len() as f64);
            self.backward(params, &mut grads, &trace, &d);
            total += loss;
        }
        Ok((total / batch.len() as f64, grads))
    }

    /// ε-prediction training with `t` uniform in `1..=T`; one loss-curve row per epoch.
    pub fn train(&self, params: &mut ModelParams, corpus: &SegmentMatrix) -> Result<LossCurve> {
        if corpus.rows() == 0 {
            return Err(Error::InsufficientData("diffusion needs at least one training row".into()));
        }
        let cfg = &self.config;
        let mut rng = Rng::new(cfg.seed).derive(0x6469_6666);
        let mut adam = AdamState::new(params, AdamConfig::with_lr(cfg.lr));
        let mut curve = LossCurve::new(&["epoch", "mean_loss"]);
        let mut order: Vec<usize> = (0..corpus.rows()).collect();
        for epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut sum = 0.0;
            for chunk in order.chunks(cfg.batch) {
                let mut batch = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let t = 1 + rng.below(self.schedule.steps());
                    let (x_t, eps) = self.schedule.forward_noise(corpus.row(i), t, &mut rng)?;
                    batch.push((x_t, t, eps));
                }
                let (loss, grads) = self.loss_and_grads(params, &batch)?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged(format!("loss {loss} at epoch {epoch}")));
                }
                adam.step(params, &grads)?;
                sum += loss * chunk.len() as f64;
            }
            curve.push(epoch, vec![sum / corpus.rows() as f64]);
        }
        Ok(curve)
    }

    /// One ancestral chain from `x_T ~ N(0, I)`; returns the clamped row and
    /// the number of denoiser evaluations.
    pub fn sample_row(&self, params: &ModelParams, len: usize, rng: &mut Rng) -> (Vec<f64>, usize) {
        let s = &self.schedule;
        let mut x: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
        let mut evals = 0;
        for t in (1..=s.steps()).rev() {
            let eps = self.predict_noise(params, &x, t);
            evals += 1;
            let coef = s.beta(t) / (1.0 - s.alpha_bar(t)).sqrt();
            let inv = 1.0 / s.alpha(t).sqrt();
            let sd = s.posterior_variance(t).sqrt();
            for (v, e) in x.iter_mut().zip(&eps) {
                *v = inv * (*v - coef * e);
                if t > 1 {
                    *v += sd * rng.normal();
                }
            }
        }
        x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        (x, evals)
    }

    /// `n` rows of length `len`, row `i` drawn from `rng.derive(i)`.
    pub fn sample(&self, params: &ModelParams, n: usize, len: usize, rng: &mut Rng) -> Result<SegmentMatrix> {
        let base = rng.derive(0x7361_6d70);
        let mut m = SegmentMatrix::new(len);
        for i in 0..n {
            let (row, _) = self.sample_row(params, len, &mut base.derive(i as u64));
            m.push(
                &row,
                Provenance {
                    subject_id: "diffusion".into(),
                    peak_index: i,
                },
            )?;
        }
        Ok(m)
    }

    pub fn evaluate(
        &self,
        params: &ModelParams,
        real: &SegmentMatrix,
        n: usize,
        eval: &GenEvalConfig,
        rng: &mut Rng,
    ) -> Result<GenEvalReport> {
        let synth = self.sample(params, n, real.cols(), rng)?;
        generative_report(real, &synth, eval)
    }
}
