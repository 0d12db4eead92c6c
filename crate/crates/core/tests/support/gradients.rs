//! Finite-difference checks for every layer, loss and full model. Layer
//! inputs are stored as parameters so input gradients are verified too.

use pcg_core::dgan::{Dgan, DganConfig};
use pcg_core::diffusion::{DenoiserConfig, Diffusion, NoiseSchedule};
use pcg_core::metrics::SequenceClassifier;
use pcg_core::nn::activations::{leaky_relu, leaky_relu_backward, relu, relu_backward, Gated};
use pcg_core::nn::loss::{bce_with_logits, mse, softmax_cross_entropy};
use pcg_core::nn::{
    finite_diff_check, finite_diff_check_sampled, Conv1d, Dense, GradCheckReport, Lstm, ModelParams, Padding, Rng,
    Tensor,
};
use pcg_core::wavenet::{WaveNet, WaveNetConfig};
use pcg_core::Result;

const EPS: f64 = 1e-6;

fn normals(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Normal draws pushed at least 0.2 away from the kink at zero.
fn off_kink(n: usize, rng: &mut Rng) -> Vec<f64> {
    normals(n, rng).into_iter().map(|v| v + 0.2 * v.signum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn insert(p: &mut ModelParams, name: &str, data: Vec<f64>) -> Result<()> {
    p.insert(name, Tensor::from_vec(&[data.len()], data)?)
}

fn dense() -> Result<GradCheckReport> {
    let mut rng = Rng::new(21);
    let layer = Dense::new("d", 4, 3);
    let batch = 2;
    let mut p = ModelParams::new();
    layer.init(&mut p, &mut rng)?;
    insert(&mut p, "x", normals(batch * 4, &mut rng))?;
    let r = normals(batch * 3, &mut rng);
    finite_diff_check(
        |q| {
            let x = q.expect("x").data().to_vec();
            let y = layer.forward(q, &x, batch);
            let mut g = q.zeros_like();
            let dx = layer.backward(q, &mut g, &x, batch, &r);
            g.expect_mut("x").data_mut().copy_from_slice(&dx);
            Ok((dot(&y, &r), g))
        },
        &p,
        EPS,
    )
}

fn conv(kernel: usize, dilation: usize, padding: Padding, range: (usize, usize), seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let (c_in, c_out, t) = (2, 3, 9);
    let layer = Conv1d::new("c", c_in, c_out, kernel, dilation, padding);
    let mut p = ModelParams::new();
    layer.init(&mut p, &mut rng)?;
    insert(&mut p, "x", normals(c_in * t, &mut rng))?;
    let (p0, p1) = range;
    let r = normals(c_out * (p1 - p0), &mut rng);
    finite_diff_check(
        |q| {
            let x = q.expect("x").data().to_vec();
            let y = layer.forward_range(q, &x, t, p0, p1);
            let mut g = q.zeros_like();
            let dx = layer.backward_range(q, &mut g, &x, t, p0, p1, &r);
            g.expect_mut("x").data_mut().copy_from_slice(&dx);
            Ok((dot(&y, &r), g))
        },
        &p,
        EPS,
    )
}

/// Three unrolled steps; loss reads every hidden state and the final cell.
fn lstm() -> Result<GradCheckReport> {
    let mut rng = Rng::new(23);
    let (n_in, hd, batch, steps) = (3, 4, 2, 3);
    let layer = Lstm::new("l", n_in, hd);
    let mut p = ModelParams::new();
    layer.init(&mut p, &mut rng)?;
    insert(&mut p, "x", normals(steps * batch * n_in, &mut rng))?;
    insert(&mut p, "h0", normals(batch * hd, &mut rng))?;
    insert(&mut p, "c0", normals(batch * hd, &mut rng))?;
    let r_h: Vec<Vec<f64>> = (0..steps).map(|_| normals(batch * hd, &mut rng)).collect();
    let r_c = normals(batch * hd, &mut rng);
    finite_diff_check(
        |q| {
            let xs = q.expect("x").data().to_vec();
            let mut state = pcg_core::nn::LstmState {
                h: q.expect("h0").data().to_vec(),
                c: q.expect("c0").data().to_vec(),
            };
            let mut caches = Vec::new();
            let mut loss = 0.0;
            for (s, rh) in r_h.iter().enumerate() {
                let x = &xs[s * batch * n_in..(s + 1) * batch * n_in];
                let (next, cache) = layer.step(q, x, batch, &state)?;
                loss += dot(&next.h, rh);
                caches.push(cache);
                state = next;
            }
            loss += dot(&state.c, &r_c);
            let mut g = q.zeros_like();
            let mut dh = vec![0.0; batch * hd];
            let mut dc = r_c.clone();
            let mut dxs = vec![0.0; xs.len()];
            for s in (0..steps).rev() {
                dh.iter_mut().zip(&r_h[s]).for_each(|(d, v)| *d += v);
                let (dx, dh_prev, dc_prev) = layer.step_backward(q, &mut g, &caches[s], &dh, &dc);
                dxs[s * batch * n_in..(s + 1) * batch * n_in].copy_from_slice(&dx);
                dh = dh_prev;
                dc = dc_prev;
            }
            g.expect_mut("x").data_mut().copy_from_slice(&dxs);
            g.expect_mut("h0").data_mut().copy_from_slice(&dh);
            g.expect_mut("c0").data_mut().copy_from_slice(&dc);
            Ok((loss, g))
        },
        &p,
        EPS,
    )
}

fn gated() -> Result<GradCheckReport> {
    let mut rng = Rng::new(24);
    let mut p = ModelParams::new();
    insert(&mut p, "a", normals(6, &mut rng))?;
    insert(&mut p, "b", normals(6, &mut rng))?;
    let r = normals(6, &mut rng);
    finite_diff_check(
        |q| {
            let unit = Gated::forward(q.expect("a").data(), q.expect("b").data());
            let (da, db) = unit.backward(&r);
            let mut g = q.zeros_like();
            g.expect_mut("a").data_mut().copy_from_slice(&da);
            g.expect_mut("b").data_mut().copy_from_slice(&db);
            Ok((dot(&unit.out, &r), g))
        },
        &p,
        EPS,
    )
}

fn rectifiers() -> Result<GradCheckReport> {
    let mut rng = Rng::new(25);
    let mut p = ModelParams::new();
    insert(&mut p, "x", off_kink(8, &mut rng))?;
    let r = normals(8, &mut rng);
    finite_diff_check(
        |q| {
            let x = q.expect("x").data();
            let loss = dot(&relu(x), &r) + dot(&leaky_relu(x, 0.2), &r);
            let d: Vec<f64> = relu_backward(&r, x)
                .iter()
                .zip(leaky_relu_backward(&r, x, 0.2))
                .map(|(a, b)| a + b)
                .collect();
            let mut g = q.zeros_like();
            g.expect_mut("x").data_mut().copy_from_slice(&d);
            Ok((loss, g))
        },
        &p,
        EPS,
    )
}

fn losses() -> Result<GradCheckReport> {
    let mut rng = Rng::new(26);
    let (q_levels, t) = (5, 4);
    let targets = [0, 3, 4, 1];
    let mse_target = normals(6, &mut rng);
    let labels = [1.0, 0.0, 0.0, 1.0, 1.0];
    let mut p = ModelParams::new();
    insert(&mut p, "logits", normals(q_levels * t, &mut rng))?;
    insert(&mut p, "pred", normals(6, &mut rng))?;
    insert(&mut p, "z", normals(5, &mut rng))?;
    finite_diff_check(
        |q| {
            let (l1, d1) = softmax_cross_entropy(q.expect("logits").data(), q_levels, t, &targets);
            let (l2, d2) = mse(q.expect("pred").data(), &mse_target);
            let (l3, d3) = bce_with_logits(q.expect("z").data(), &labels);
            let mut g = q.zeros_like();
            g.expect_mut("logits").data_mut().copy_from_slice(&d1);
            g.expect_mut("pred").data_mut().copy_from_slice(&d2);
            g.expect_mut("z").data_mut().copy_from_slice(&d3);
            Ok((l1 + l2 + l3, g))
        },
        &p,
        EPS,
    )
}

pub fn layers() -> Result<Vec<(&'static str, GradCheckReport)>> {
    Ok(vec![
        ("dense", dense()?),
        ("conv causal k2 d2", conv(2, 2, Padding::Causal, (0, 9), 31)?),
        ("conv centered k3 d2", conv(3, 2, Padding::Centered, (0, 9), 32)?),
        ("conv causal range 3..7", conv(2, 4, Padding::Causal, (3, 7), 33)?),
        ("conv pointwise", conv(1, 1, Padding::Causal, (0, 9), 34)?),
        ("lstm bptt", lstm()?),
        ("gated tanh-sigmoid", gated()?),
        ("relu / leaky relu", rectifiers()?),
        ("softmax-ce / mse / bce", losses()?),
    ])
}

fn wavenet() -> Result<GradCheckReport> {
    let cfg = WaveNetConfig {
        layers: 3,
        residual_channels: 4,
        skip_channels: 5,
        quantization_levels: 16,
        horizon: 4,
        ..WaveNetConfig::default()
    };
    let m = WaveNet::new(cfg)?;
    let p = m.build(&mut Rng::new(4))?;
    let rows: Vec<Vec<f64>> = (0..2)
        .map(|r| (0..12).map(|i| ((i + r) as f64 * 0.7).sin() * 0.9).collect())
        .collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    finite_diff_check_sampled(|q| m.loss_and_grads(q, &refs), &p, EPS, 6, &mut Rng::new(5))
}

fn small_dgan() -> Result<Dgan> {
    Dgan::new(DganConfig {
        critic_layers: 2,
        critic_units: 8,
        attr_hidden: 5,
        gen_lstm_units: 6,
        samples_per_cell: 5,
        seq_len: 20,
        noise_dim: 3,
        ..DganConfig::desk()
    })
}

fn dgan_critic() -> Result<GradCheckReport> {
    let m = small_dgan()?;
    let p = m.build(&mut Rng::new(3))?;
    let mut rng = Rng::new(8);
    let (b, d) = (4, m.critic_input_dim());
    let real: Vec<f64> = (0..b * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let fake: Vec<f64> = (0..b * d).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let mix: Vec<f64> = (0..b).map(|_| rng.uniform()).collect();
    finite_diff_check_sampled(
        |q| {
            let mut full = p.clone();
            full.overlay(q);
            let (loss, g) = m.critic_loss_and_grads(&full, &real, &fake, &mix, b)?;
            Ok((loss.total, g.with_prefix("dgan.critic.")))
        },
        &p.with_prefix("dgan.critic."),
        1e-5,
        40,
        &mut Rng::new(1),
    )
}

fn dgan_generator() -> Result<GradCheckReport> {
    let m = small_dgan()?;
    let p = m.build(&mut Rng::new(3))?;
    let noise = m.sample_noise(3, &mut Rng::new(6));
    finite_diff_check_sampled(
        |q| {
            let mut full = p.clone();
            full.overlay(q);
            let (loss, g) = m.generator_loss_and_grads(&full, &noise)?;
            Ok((loss, g.with_prefix("dgan.gen.")))
        },
        &p.with_prefix("dgan.gen."),
        1e-5,
        40,
        &mut Rng::new(2),
    )
}

fn denoiser() -> Result<GradCheckReport> {
    let s = NoiseSchedule::default();
    let cfg = DenoiserConfig {
        channels: 4,
        layers: 3,
        embed_dim: 8,
        positional_channels: 4,
        ..DenoiserConfig::default()
    };
    let m = Diffusion::new(cfg, s.clone())?;
    let p = m.build(&mut Rng::new(4))?;
    let mut rng = Rng::new(5);
    let mut batch = Vec::new();
    for (shift, t) in [(0.0, 3usize), (1.0, 41)] {
        let row: Vec<f64> = (0..16).map(|i| 0.9 * (i as f64 * 0.4 + shift).sin()).collect();
        let (x, e) = s.forward_noise(&row, t, &mut rng)?;
        batch.push((x, t, e));
    }
    finite_diff_check_sampled(|q| m.loss_and_grads(q, &batch), &p, 1e-5, 12, &mut Rng::new(6))
}

fn discriminator() -> Result<GradCheckReport> {
    let model = SequenceClassifier::new(4);
    let params = model.init(&mut Rng::new(8))?;
    let mut rng = Rng::new(9);
    let data: Vec<Vec<f64>> = (0..3).map(|_| normals(6, &mut rng)).collect();
    let seqs: Vec<&[f64]> = data.iter().map(Vec::as_slice).collect();
    finite_diff_check(|p| model.loss_and_grads(p, &seqs, &[1.0, 0.0, 1.0]), &params, EPS)
}

pub fn models() -> Result<Vec<(&'static str, GradCheckReport)>> {
    Ok(vec![
        ("wavenet", wavenet()?),
        ("dgan critic + gradient penalty", dgan_critic()?),
        ("dgan generator", dgan_generator()?),
        ("diffusion denoiser", denoiser()?),
        ("discriminative classifier", discriminator()?),
    ])
}
