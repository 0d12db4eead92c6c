//! Two-generator GAN for fixed-length segments.
//!
//! An attribute generator draws a per-row `(min, max)` pair; an LSTM sequence
//! generator conditioned on that pair emits `samples_per_cell` values per cell
//! in `(-1, 1)`, which are rescaled into `[min, max]`. A single MLP critic
//! scores `(min, max) ⧺ row` and is trained with a Wasserstein loss plus
//! gradient penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{generative_report, GenEvalConfig, GenEvalReport};
use crate::nn::activations::{leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid};
use crate::nn::linalg::{gemm, MatMut, MatRef};
use crate::nn::{AdamConfig, AdamState, Dense, LossCurve, Lstm, LstmStepCache, ModelParams, Rng};
use crate::segment::{Provenance, SegmentMatrix};

const ATTR_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DganConfig {
    /// Hidden layers in the critic; 0 gives a linear critic.
    pub critic_layers: usize,
    pub critic_units: usize,
    pub attr_hidden: usize,
    pub gen_lstm_units: usize,
    pub samples_per_cell: usize,
    pub seq_len: usize,
    pub noise_dim: usize,
    pub lr_generator: f64,
    pub lr_critic: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub steps: usize,
    pub batch: usize,
    pub gradient_penalty_weight: f64,
    pub critic_updates_per_step: usize,
    pub leaky_slope: f64,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for DganConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl DganConfig {
    pub fn paper() -> Self {
        Self {
            critic_layers: 3,
            critic_units: 100,
            attr_hidden: 100,
            gen_lstm_units: 100,
            samples_per_cell: 10,
            seq_len: 110,
            noise_dim: 32,
            lr_generator: 1e-4,
            lr_critic: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            steps: 10_000,
            batch: 1000,
            gradient_penalty_weight: 10.0,
            critic_updates_per_step: 1,
            leaky_slope: 0.2,
            log_every: 100,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            steps: 4000,
            batch: 64,
            lr_generator: 1.5e-4,
            lr_critic: 1.5e-4,
            ..Self::paper()
        }
    }

    pub fn cells(&self) -> usize {
        self.seq_len / self.samples_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_cell == 0 || self.seq_len == 0 || self.seq_len % self.samples_per_cell != 0 {
            return Err(Error::invalid(format!(
                "seq_len {} must be a positive multiple of samples_per_cell {}",
                self.seq_len, self.samples_per_cell
            )));
        }
        if !(self.lr_generator > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.noise_dim == 0 || self.gen_lstm_units == 0 || self.attr_hidden == 0 {
            return Err(Error::invalid("generator widths must be positive"));
        }
        if self.critic_layers > 0 && self.critic_units == 0 {
            return Err(Error::invalid("critic_units must be positive"));
        }
        if self.batch == 0 || self.log_every == 0 || self.critic_updates_per_step == 0 {
            return Err(Error::invalid("batch, log_every and critic_updates_per_step must be positive"));
        }
        if !(self.gradient_penalty_weight >= 0.0) {
            return Err(Error::invalid("gradient_penalty_weight must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Latent inputs for one generator pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNoise {
    pub batch: usize,
    /// `[batch × noise_dim]`.
    pub attr: Vec<f64>,
    /// One `[batch × noise_dim]` block per cell.
    pub cells: Vec<Vec<f64>>,
}

/// Scalar terms of one critic evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticLoss {
    pub total: f64,
    pub penalty: f64,
    pub score_real: f64,
    pub score_fake: f64,
}

#[derive(Clone, Debug)]
pub struct DganTraining {
    /// Columns: critic_loss, generator_loss, score_real, score_fake, penalty.
    pub curve: LossCurve,
    pub critic_updates: usize,
    pub generator_updates: usize,
}

#[derive(Clone, Debug)]
pub struct Dgan {
    pub config: DganConfig,
    attr1: Dense,
    attr2: Dense,
    lstm: Lstm,
    seq_out: Dense,
    critic: Vec<Dense>,
}

struct GeneratorTrace {
    batch: usize,
    attr_noise: Vec<f64>,
    a1_pre: Vec<f64>,
    a1_out: Vec<f64>,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    gates: Vec<f64>,
    lstm: Vec<LstmStepCache>,
    hidden: Vec<Vec<f64>>,
    cell_out: Vec<Vec<f64>>,
}

struct CriticTrace {
    batch: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Dgan {
    pub fn new(config: DganConfig) -> Result<Self> {
        config.validate()?;
        let input = ATTR_DIM + config.seq_len;
        let mut critic = Vec::with_capacity(config.critic_layers + 1);
        let mut width = input;
        for l in 0..config.critic_layers {
            critic.push(Dense::new(format!("dgan.critic.h{l}"), width, config.critic_units));
            width = config.critic_units;
        }
        critic.push(Dense::new("dgan.critic.out", width, 1));
        Ok(Self {
            attr1: Dense::new("dgan.gen.attr1", config.noise_dim, config.attr_hidden),
            attr2: Dense::new("dgan.gen.attr2", config.attr_hidden, ATTR_DIM),
            lstm: Lstm::new("dgan.gen.lstm", ATTR_DIM + config.noise_dim, config.gen_lstm_units),
            seq_out: Dense::new("dgan.gen.seq_out", config.gen_lstm_units, config.samples_per_cell),
            critic,
            config,
        })
    }

    pub fn build(&self, rng: &mut Rng) -> Result<ModelParams> {
        let mut p = ModelParams::new();
        self.attr1.init(&mut p, rng)?;
        self.attr2.init(&mut p, rng)?;
        self.lstm.init(&mut p, rng)?;
        self.seq_out.init(&mut p, rng)?;
        for d in &self.critic {
            d.init(&mut p, rng)?;
        }
        Ok(p)
    }

    /// Width of a critic input row: `(min, max)` followed by the sequence.
    pub fn critic_input_dim(&self) -> usize {
        ATTR_DIM + self.config.seq_len
    }

    pub fn sample_noise(&self, batch: usize, rng: &mut Rng) -> GeneratorNoise {
        let k = self.config.noise_dim;
        let mut draw = |n: usize| (0..n).map(|_| rng.normal()).collect::<Vec<f64>>();
        let attr = draw(batch * k);
        let cells = (0..self.config.cells()).map(|_| draw(batch * k)).collect();
        GeneratorNoise { batch, attr, cells }
    }

    fn check_noise(&self, noise: &GeneratorNoise) -> Result<()> {
        let n = noise.batch * self.config.noise_dim;
        if noise.attr.len() != n || noise.cells.len() != self.config.cells() || noise.cells.iter().any(|c| c.len() != n) {
            return Err(Error::shape("generator noise does not match the configuration"));
        }
        Ok(())
    }

    /// Returns critic-input rows `[batch × (2 + seq_len)]`.
    fn generator_forward(&self, params: &ModelParams, noise: &GeneratorNoise) -> Result<(GeneratorTrace, Vec<f64>)> {
        self.check_noise(noise)?;
        let b = noise.batch;
        let k = self.config.noise_dim;
        let spc = self.config.samples_per_cell;
        let a1_pre = self.attr1.forward(params, &noise.attr, b);
        let a1_out = relu(&a1_pre);
        let o = self.attr2.forward(params, &a1_out, b);
        let mut mins = Vec::with_capacity(b);
        let mut maxs = Vec::with_capacity(b);
        let mut gates = Vec::with_capacity(b);
        for r in 0..b {
            let lo = o[2 * r].tanh();
            let s = sigmoid(o[2 * r + 1]);
            mins.push(lo);
            maxs.push(lo + (1.0 - lo) * s);
            gates.push(s);
        }
        let mut state = self.lstm.zero_state(b);
        let mut lstm = Vec::with_capacity(self.config.cells());
        let mut hidden = Vec::with_capacity(self.config.cells());
        let mut cell_out = Vec::with_capacity(self.config.cells());
        let mut rows = vec![0.0; b * self.critic_input_dim()];
        let dim = self.critic_input_dim();
        for r in 0..b {
            rows[r * dim] = mins[r];
            rows[r * dim + 1] = maxs[r];
        }
        for (c, z) in noise.cells.iter().enumerate() {
            let mut x = Vec::with_capacity(b * (ATTR_DIM + k));
            for r in 0..b {
                x.push(mins[r]);
                x.push(maxs[r]);
                x.extend_from_slice(&z[r * k..(r + 1) * k]);
            }
            let (next, cache) = self.lstm.step(params, &x, b, &state)?;
            let u: Vec<f64> = self.seq_out.forward(params, &next.h, b).into_iter().map(f64::tanh).collect();
            for r in 0..b {
                let span = maxs[r] - mins[r];
                for j in 0..spc {
                    rows[r * dim + ATTR_DIM + c * spc + j] = mins[r] + 0.5 * (u[r * spc + j] + 1.0) * span;
                }
            }
            hidden.push(next.h.clone());
            cell_out.push(u);
            lstm.push(cache);
            state = next;
        }
        let trace = GeneratorTrace {
            batch: b,
            attr_noise: noise.attr.clone(),
            a1_pre,
            a1_out,
            mins,
            maxs,
            gates,
            lstm,
            hidden,
            cell_out,
        };
        Ok((trace, rows))
    }

    fn generator_backward(&self, params: &ModelParams, grads: &mut ModelParams, tr: &GeneratorTrace, d_rows: &[f64]) {
        let b = tr.batch;
        let spc = self.config.samples_per_cell;
        let dim = self.critic_input_dim();
        let hd = self.config.gen_lstm_units;
        let mut d_min: Vec<f64> = (0..b).map(|r| d_rows[r * dim]).collect();
        let mut d_max: Vec<f64> = (0..b).map(|r| d_rows[r * dim + 1]).collect();
        let mut dh_next = vec![0.0; b * hd];
        let mut dc_next = vec![0.0; b * hd];
        for c in (0..self.config.cells()).rev() {
            let u = &tr.cell_out[c];
            let mut d_pre = vec![0.0; b * spc];
            for r in 0..b {
                let span = tr.maxs[r] - tr.mins[r];
                for j in 0..spc {
                    let g = d_rows[r * dim + ATTR_DIM + c * spc + j];
                    let w = 0.5 * (u[r * spc + j] + 1.0);
                    d_min[r] += g * (1.0 - w);
                    d_max[r] += g * w;
                    d_pre[r * spc + j] = g * 0.5 * span * (1.0 - u[r * spc + j] * u[r * spc + j]);
                }
            }
            let mut dh = self.seq_out.backward(params, grads, &tr.hidden[c], b, &d_pre);
            dh.iter_mut().zip(&dh_next).for_each(|(a, v)| *a += v);
            let (dx, dh_prev, dc_prev) = self.lstm.step_backward(params, grads, &tr.lstm[c], &dh, &dc_next);
            let n_in = ATTR_DIM + self.config.noise_dim;
            for r in 0..b {
                d_min[r] += dx[r * n_in];
                d_max[r] += dx[r * n_in + 1];
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        let mut d_o = vec![0.0; b * ATTR_DIM];
        for r in 0..b {
            let (lo, s) = (tr.mins[r], tr.gates[r]);
            d_o[2 * r + 1] = d_max[r] * (1.0 - lo) * s * (1.0 - s);
            d_o[2 * r] = (d_min[r] + d_max[r] * (1.0 - s)) * (1.0 - lo * lo);
        }
        let d_a1 = self.attr2.backward(params, grads, &tr.a1_out, b, &d_o);
        let d_a1_pre = relu_backward(&d_a1, &tr.a1_pre);
        self.attr1.accumulate_grads(grads, &tr.attr_noise, b, &d_a1_pre);
    }

    fn critic_forward(&self, params: &ModelParams, x: &[f64], batch: usize) -> (CriticTrace, Vec<f64>) {
        let mut inputs = Vec::with_capacity(self.critic.len());
        let mut pre = Vec::with_capacity(self.critic.len() - 1);
        let mut h = x.to_vec();
        let last = self.critic.len() - 1;
        let mut out = Vec::new();
        for (l, d) in self.critic.iter().enumerate() {
            let z = d.forward(params, &h, batch);
            inputs.push(std::mem::take(&mut h));
            if l < last {
                h = leaky_relu(&z, self.config.leaky_slope);
                pre.push(z);
            } else {
                out = z;
            }
        }
        (CriticTrace { batch, inputs, pre }, out)
    }

    /// Scores `[batch]` for critic-input rows.
    pub fn critic_scores(&self, params: &ModelParams, x: &[f64], batch: usize) -> Vec<f64> {
        self.critic_forward(params, x, batch).1
    }

    /// Back-propagates `d_scores`; accumulates into `grads` when given and
    /// returns the gradient with respect to the input rows.
    fn critic_backward(
        &self,
        params: &ModelParams,
        mut grads: Option<&mut ModelParams>,
        tr: &CriticTrace,
        d_scores: &[f64],
    ) -> Vec<f64> {
        let mut dy = d_scores.to_vec();
        for (l, d) in self.critic.iter().enumerate().rev() {
            if let Some(g) = grads.as_deref_mut() {
                d.accumulate_grads(g, &tr.inputs[l], tr.batch, &dy);
            }
            let dx = d.input_grad(params, tr.batch, &dy);
            dy = if l > 0 {
                leaky_relu_backward(&dx, &tr.pre[l - 1], self.config.leaky_slope)
            } else {
                dx
            };
        }
        dy
    }

    /// `mean((‖∇ₓD(x)‖ − 1)²)` over the batch, with its gradient accumulated
    /// into `grads` scaled by `weight`. Leaky-ReLU slopes are treated as
    /// locally constant, so bias gradients vanish.
    fn gradient_penalty(&self, params: &ModelParams, grads: &mut ModelParams, x: &[f64], batch: usize, weight: f64) -> f64 {
        let (tr, _) = self.critic_forward(params, x, batch);
        let slope = self.config.leaky_slope;
        let masks: Vec<Vec<f64>> = tr
            .pre
            .iter()
            .map(|z| z.iter().map(|&v| if v > 0.0 { 1.0 } else { slope }).collect())
            .collect();
        let k = self.critic.len() - 1;
        // deltas[l]: d score / d pre-activation of layer l, `[batch × n_out_l]`
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
        deltas[k] = vec![1.0; batch];
        let mut g = Vec::new();
        for l in (0..=k).rev() {
            let d = &self.critic[l];
            let w = params.expect(&d.weight_name()).data();
            let mut gl = vec![0.0; batch * d.n_in];
            gemm(
                1.0,
                MatRef::new(&deltas[l], batch, d.n_out),
                MatRef::new(w, d.n_out, d.n_in),
                0.0,
                MatMut::new(&mut gl, batch, d.n_in),
            );
            if l > 0 {
                deltas[l - 1] = gl.iter().zip(&masks[l - 1]).map(|(a, m)| a * m).collect();
            } else {
                g = gl;
            }
        }
        let n_in = self.critic[0].n_in;
        let mut penalty = 0.0;
        let mut u = vec![0.0; batch * n_in];
        for r in 0..batch {
            let row = &g[r * n_in..(r + 1) * n_in];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            penalty += (norm - 1.0).powi(2);
            if norm > 0.0 {
                let scale = weight * 2.0 * (norm - 1.0) / norm / batch as f64;
                for (o, v) in u[r * n_in..(r + 1) * n_in].iter_mut().zip(row) {
                    *o = scale * v;
                }
            }
        }
        for l in 0..=k {
            let d = &self.critic[l];
            let w = params.expect(&d.weight_name()).data();
            gemm(
                1.0,
                MatRef::new(&deltas[l], batch, d.n_out).t(),
                MatRef::new(&u, batch, d.n_in),
                1.0,
                MatMut::new(grads.expect_mut(&d.weight_name()).data_mut(), d.n_out, d.n_in),
            );
            if l == k {
                break;
            }
            let mut dd = vec![0.0; batch * d.n_out];
            gemm(
                1.0,
                MatRef::new(&u, batch, d.n_in),
                MatRef::new(w, d.n_out, d.n_in).t(),
                0.0,
                MatMut::new(&mut dd, batch, d.n_out),
            );
            u = dd.iter().zip(&masks[l]).map(|(a, m)| a * m).collect();
        }
        penalty / batch as f64
    }

    /// Critic objective `mean D(fake) − mean D(real) + λ·GP` on interpolates
    /// `ε·real + (1 − ε)·fake`, and its gradient over the critic parameters.
    pub fn critic_loss_and_grads(
        &self,
        params: &ModelParams,
        real: &[f64],
        fake: &[f64],
        mix: &[f64],
        batch: usize,
    ) -> Result<(CriticLoss, ModelParams)> {
        let dim = self.critic_input_dim();
        if real.len() != batch * dim || fake.len() != batch * dim || mix.len() != batch || batch == 0 {
            return Err(Error::shape("critic batch does not match the configuration"));
        }
        let mut grads = params.zeros_like();
        let n = batch as f64;
        let (tr_real, s_real) = self.critic_forward(params, real, batch);
        self.critic_backward(params, Some(&mut grads), &tr_real, &vec![-1.0 / n; batch]);
        let (tr_fake, s_fake) = self.critic_forward(params, fake, batch);
        self.critic_backward(params, Some(&mut grads), &tr_fake, &vec![1.0 / n; batch]);
        let score_real = s_real.iter().sum::<f64>() / n;
        let score_fake = s_fake.iter().sum::<f64>() / n;
        let lambda = self.config.gradient_penalty_weight;
        let penalty = if lambda > 0.0 {
            let mut hat = vec![0.0; batch * dim];
            for r in 0..batch {
                let e = mix[r];
                for j in 0..dim {
                    let i = r * dim + j;
                    hat[i] = e * real[i] + (1.0 - e) * fake[i];
                }
            }
            self.gradient_penalty(params, &mut grads, &hat, batch, lambda)
        } else {
            0.0
        };
        let loss = CriticLoss {
            total: score_fake - score_real + lambda * penalty,
            penalty,
            score_real,
            score_fake,
        };
        Ok((loss, grads))
    }

    /// Generator objective `−mean D(G(z))` and its gradient over the
    /// generator parameters (critic entries stay zero).
    pub fn generator_loss_and_grads(&self, params: &ModelParams, noise: &GeneratorNoise) -> Result<(f64, ModelParams)> {
        let b = noise.batch;
        let (gtr, rows) = self.generator_forward(params, noise)?;
        let (ctr, scores) = self.critic_forward(params, &rows, b);
        let d_rows = self.critic_backward(params, None, &ctr, &vec![-1.0 / b as f64; b]);
        let mut grads = params.zeros_like();
        self.generator_backward(params, &mut grads, &gtr, &d_rows);
        Ok((-scores.iter().sum::<f64>() / b as f64, grads))
    }

    /// Critic-input rows for real segments, paired with their own `(min, max)`.
    pub fn real_rows(&self, corpus: &SegmentMatrix, idx: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(idx.len() * self.critic_input_dim());
        for &i in idx {
            let row = corpus.row(i);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.push(lo);
            out.push(hi);
            out.extend_from_slice(row);
        }
        out
    }

    /// Alternating training: per step, `critic_updates_per_step` critic
    /// updates then one joint update of both generators. Real batches are
    /// drawn with replacement.
    pub fn train(&self, params: &mut ModelParams, corpus: &SegmentMatrix) -> Result<DganTraining> {
        let cfg = &self.config;
        if corpus.rows() == 0 {
            return Err(Error::InsufficientData("dgan needs at least one training row".into()));
        }
        if corpus.cols() != cfg.seq_len {
            return Err(Error::shape(format!("rows have {} values, model expects {}", corpus.cols(), cfg.seq_len)));
        }
        let adam = |prefix: &str, lr: f64| {
            AdamState::new(
                &params.with_prefix(prefix),
                AdamConfig {
                    lr,
                    beta1: cfg.adam_beta1,
                    beta2: cfg.adam_beta2,
                    ..AdamConfig::default()
                },
            )
        };
        let mut critic_opt = adam("dgan.critic.", cfg.lr_critic);
        let mut gen_opt = adam("dgan.gen.", cfg.lr_generator);
        let mut rng = Rng::new(cfg.seed).derive(0x6467_616e);
        let mut curve = LossCurve::new(&["step", "critic_loss", "generator_loss", "score_real", "score_fake", "penalty"]);
        let (mut critic_updates, mut generator_updates) = (0, 0);
        let b = cfg.batch;
        for step in 0..cfg.steps {
            let mut last = None;
            for _ in 0..cfg.critic_updates_per_step {
                let idx: Vec<usize> = (0..b).map(|_| rng.below(corpus.rows())).collect();
                let real = self.real_rows(corpus, &idx);
                let noise = self.sample_noise(b, &mut rng);
                let (_, fake) = self.generator_forward(params, &noise)?;
                let mix: Vec<f64> = (0..b).map(|_| rng.uniform()).collect();
                let (loss, grads) = self.critic_loss_and_grads(params, &real, &fake, &mix, b)?;
                if !loss.total.is_finite() {
                    return Err(Error::TrainingDiverged(format!("critic loss {} at step {step}", loss.total)));
                }
                critic_opt.step(params, &grads)?;
                critic_updates += 1;
                last = Some(loss);
            }
            let noise = self.sample_noise(b, &mut rng);
            let (g_loss, grads) = self.generator_loss_and_grads(params, &noise)?;
            if !g_loss.is_finite() {
                return Err(Error::TrainingDiverged(format!("generator loss {g_loss} at step {step}")));
            }
            gen_opt.step(params, &grads)?;
            generator_updates += 1;
            if step % cfg.log_every == 0 || step + 1 == cfg.steps {
                let c = last.expect("at least one critic update per step");
                curve.push(step, vec![c.total, g_loss, c.score_real, c.score_fake, c.penalty]);
            }
        }
        Ok(DganTraining {
            curve,
            critic_updates,
            generator_updates,
        })
    }

    /// Generated rows with their `(min, max)` attributes.
    pub fn generate_with_attributes(&self, params: &ModelParams, n: usize, rng: &mut Rng) -> Result<(SegmentMatrix, Vec<[f64; 2]>)> {
        let mut m = SegmentMatrix::new(self.config.seq_len);
        let mut attrs = Vec::with_capacity(n);
        let dim = self.critic_input_dim();
        let mut done = 0;
        while done < n {
            let b = (n - done).min(256);
            let noise = self.sample_noise(b, rng);
            let (_, rows) = self.generator_forward(params, &noise)?;
            for r in rows.chunks(dim) {
                attrs.push([r[0], r[1]]);
                m.push(
                    &r[ATTR_DIM..],
                    Provenance {
                        subject_id: "dgan".into(),
                        peak_index: done,
                    },
                )?;
                done += 1;
            }
        }
        Ok((m, attrs))
    }

    pub fn generate(&self, params: &ModelParams, n: usize, rng: &mut Rng) -> Result<SegmentMatrix> {
        Ok(self.generate_with_attributes(params, n, rng)?.0)
    }

    pub fn evaluate(
        &self,
        params: &ModelParams,
        real: &SegmentMatrix,
        n: usize,
        eval: &GenEvalConfig,
        rng: &mut Rng,
    ) -> Result<GenEvalReport> {
        let synth = self.generate(params, n, rng)?;
        generative_report(real, &synth, eval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check_sampled;

    fn small() -> DganConfig {
        DganConfig {
            critic_layers: 2,
            critic_units: 8,
            attr_hidden: 5,
            gen_lstm_units: 6,
            samples_per_cell: 5,
            seq_len: 20,
            noise_dim: 3,
            steps: 30,
            batch: 8,
            log_every: 10,
            lr_generator: 1e-3,
            lr_critic: 1e-3,
            ..DganConfig::desk()
        }
    }

    fn ramp_corpus(rows: usize, len: usize) -> SegmentMatrix {
        let mut rng = Rng::new(5);
        let rows = (0..rows)
            .map(|_| {
                let a = rng.uniform_range(0.3, 1.0);
                (0..len).map(|t| a * (t as f64 / len as f64 * 6.0).sin()).collect()
            })
            .collect::<Vec<Vec<f64>>>();
        let prov = (0..rows.len())
            .map(|i| Provenance {
                subject_id: "r".into(),
                peak_index: i,
            })
            .collect();
        SegmentMatrix::from_rows(rows, prov).unwrap()
    }

    #[test]
    fn generated_rows_stay_inside_their_attributes() {
        let m = Dgan::new(DganConfig::desk()).unwrap();
        let p = m.build(&mut Rng::new(1)).unwrap();
        let (rows, attrs) = m.generate_with_attributes(&p, 5, &mut Rng::new(2)).unwrap();
        assert_eq!((rows.rows(), rows.cols()), (5, 110));
        for (row, [lo, hi]) in rows.iter_rows().zip(attrs) {
            assert!(-1.0 < lo && lo <= hi && hi < 1.0);
            assert!(row.iter().all(|&v| v >= lo && v <= hi));
        }
        let again = m.generate(&p, 5, &mut Rng::new(2)).unwrap();
        assert_eq!(rows, again);
        assert_eq!(m.generate(&p, 0, &mut Rng::new(2)).unwrap().rows(), 0);
    }

    #[test]
    fn untrained_row_means_centre_on_attribute_midpoints() {
        let m = Dgan::new(DganConfig::desk()).unwrap();
        let p = m.build(&mut Rng::new(4)).unwrap();
        let (rows, attrs) = m.generate_with_attributes(&p, 1000, &mut Rng::new(9)).unwrap();
        let mean_row = rows.values().iter().sum::<f64>() / rows.values().len() as f64;
        let mid = attrs.iter().map(|[a, b]| 0.5 * (a + b)).sum::<f64>() / attrs.len() as f64;
        assert!((mean_row - mid).abs() < 0.2, "{mean_row} vs {mid}");
    }

    #[test]
    fn rejects_uneven_cells() {
        let cfg = DganConfig {
            seq_len: 105,
            ..DganConfig::desk()
        };
        assert!(Dgan::new(cfg).is_err());
    }

    fn critic_batch(m: &Dgan, b: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = Rng::new(seed);
        let d = m.critic_input_dim();
        let real = (0..b * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let fake = (0..b * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let mix = (0..b).map(|_| rng.uniform()).collect();
        (real, fake, mix)
    }

    #[test]
    fn critic_gradient_with_penalty_matches_finite_differences() {
        let m = Dgan::new(small()).unwrap();
        let p = m.build(&mut Rng::new(3)).unwrap();
        let (real, fake, mix) = critic_batch(&m, 4, 8);
        let critic = p.with_prefix("dgan.critic.");
        let report = finite_diff_check_sampled(
            |q| {
                let mut full = p.clone();
                full.overlay(q);
                let (loss, g) = m.critic_loss_and_grads(&full, &real, &fake, &mix, 4)?;
                Ok((loss.total, g.with_prefix("dgan.critic.")))
            },
            &critic,
            1e-5,
            40,
            &mut Rng::new(1),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let m = Dgan::new(small()).unwrap();
        let p = m.build(&mut Rng::new(3)).unwrap();
        let noise = m.sample_noise(3, &mut Rng::new(6));
        let gen = p.with_prefix("dgan.gen.");
        let report = finite_diff_check_sampled(
            |q| {
                let mut full = p.clone();
                full.overlay(q);
                let (loss, g) = m.generator_loss_and_grads(&full, &noise)?;
                Ok((loss, g.with_prefix("dgan.gen.")))
            },
            &gen,
            1e-5,
            40,
            &mut Rng::new(2),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn linear_critic_loss_is_the_mean_difference() {
        let cfg = DganConfig {
            critic_layers: 0,
            gradient_penalty_weight: 0.0,
            ..small()
        };
        let m = Dgan::new(cfg).unwrap();
        let p = m.build(&mut Rng::new(3)).unwrap();
        let (real, fake, mix) = critic_batch(&m, 5, 2);
        let (loss, _) = m.critic_loss_and_grads(&p, &real, &fake, &mix, 5).unwrap();
        let w = p.expect("dgan.critic.out.weight").data();
        let d = m.critic_input_dim();
        let mut expected = 0.0;
        for j in 0..d {
            let mr = (0..5).map(|r| real[r * d + j]).sum::<f64>() / 5.0;
            let mf = (0..5).map(|r| fake[r * d + j]).sum::<f64>() / 5.0;
            expected += w[j] * (mf - mr);
        }
        assert!((loss.total - expected).abs() < 1e-12);
        assert_eq!(loss.penalty, 0.0);
    }

    #[test]
    fn linear_critic_penalty_is_weight_norm_deviation() {
        let cfg = DganConfig {
            critic_layers: 0,
            ..small()
        };
        let m = Dgan::new(cfg).unwrap();
        let p = m.build(&mut Rng::new(3)).unwrap();
        let (real, fake, mix) = critic_batch(&m, 3, 4);
        let (loss, _) = m.critic_loss_and_grads(&p, &real, &fake, &mix, 3).unwrap();
        let norm = p.expect("dgan.critic.out.weight").sum_squares().sqrt();
        assert!((loss.penalty - (norm - 1.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn alternation_counts_and_determinism() {
        let cfg = DganConfig {
            critic_updates_per_step: 2,
            ..small()
        };
        let m = Dgan::new(cfg).unwrap();
        let corpus = ramp_corpus(12, 20);
        let run = || {
            let mut p = m.build(&mut Rng::new(0)).unwrap();
            let t = m.train(&mut p, &corpus).unwrap();
            (p, t)
        };
        let (p1, t1) = run();
        let (p2, t2) = run();
        assert_eq!(t1.critic_updates, 60);
        assert_eq!(t1.generator_updates, 30);
        assert_eq!(t1.curve, t2.curve);
        assert_eq!(p1, p2);
        // steps 0, 10, 20 and the final one
        assert_eq!(t1.curve.len(), 4);
    }

    #[test]
    fn critic_prefers_real_rows_early_on() {
        let cfg = DganConfig {
            steps: 200,
            log_every: 10,
            ..small()
        };
        let m = Dgan::new(cfg).unwrap();
        let mut p = m.build(&mut Rng::new(0)).unwrap();
        let t = m.train(&mut p, &ramp_corpus(40, 20)).unwrap();
        let real = t.curve.column(2);
        let fake = t.curve.column(3);
        let gap = real.iter().zip(&fake).map(|(r, f)| r - f).sum::<f64>() / real.len() as f64;
        assert!(gap > 0.0, "{gap}");
    }
}
