//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p pcg-cli --test acceptance`.

#[path = "../../core/tests/support/gradients.rs"]
mod gradients;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pcg_cli::config::{PipelineConfig, Profile};
use pcg_core::dgan::Dgan;
use pcg_core::diffusion::Diffusion;
use pcg_core::ingest::{synth_fixture, FixtureSpec, Recording};
use pcg_core::metrics::{
    generative_report, jsd_from_masses, mae, mmd2, mse, smape, acd, tsne, Bandwidth, GenEvalConfig, MmdConfig,
    TsneConfig,
};
use pcg_core::nn::Rng;
use pcg_core::pipeline::{fixture_corpus, CorpusConfig};
use pcg_core::preprocess::{apply_filter, design_bandpass, BandPassSpec};
use pcg_core::quality::{assess, rmssd, zero_crossing_ratio, Criterion, QualityThresholds};
use pcg_core::segment::{dwt_approx, dwt_step, idwt_step, sine_corpus, wavedec, DwtConfig, Extension, Wavelet};
use pcg_core::wavenet::{evaluate_holdout, ForecastMode, WaveNet, WaveNetConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, format!("{what}: {got} vs {want} (tol {tol:e})"))
}

fn core<T>(r: pcg_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn desk() -> PipelineConfig {
    PipelineConfig::for_profile(Profile::Desk)
}

// 1 ------------------------------------------------------------------------

fn metric_oracles() -> Outcome {
    let fixed = MmdConfig { bandwidth: Bandwidth::Fixed(1.0) };
    let m = core(mmd2(&[[0.0]], &[[2.0]], &fixed))?;
    close(m, 2.0 - 2.0 * (-2.0f64).exp(), 1e-9, "mmd2 scalar closed form")?;

    // M = (3/4, 1/4) against P = (1, 0) and Q = (1/2, 1/2)
    let hand = 0.5 * (4.0f64 / 3.0).log2() + 0.5 * (0.5 * (2.0f64 / 3.0).log2() + 0.5 * 2.0f64.log2());
    let j = jsd_from_masses(&[1.0, 0.0], &[0.5, 0.5]);
    close(j, hand, 1e-9, "jsd hand-computed")?;
    close(j, 0.311278, 5e-7, "jsd against its six-digit rounding")?;

    close(core(mae(&[0.0, 0.0], &[1.0, -1.0]))?, 1.0, 1e-12, "mae")?;
    close(core(mae(&[0.3, -2.0], &[0.3, -2.0]))?, 0.0, 1e-12, "mae identical")?;
    close(core(mse(&[0.0], &[3.0]))?, 9.0, 1e-12, "mse")?;
    close(core(smape(&[1.0], &[3.0]))?, 100.0, 1e-12, "smape 1 vs 3")?;
    close(core(smape(&[2.0], &[1.0]))?, 200.0 / 3.0, 1e-12, "smape 2 vs 1")?;
    close(core(smape(&[0.5, -1.0], &[0.5, -1.0]))?, 0.0, 1e-12, "smape identical")?;
    let y = [0.1, -0.4, 0.7];
    let degenerate: Vec<Vec<f64>> = (0..10).map(|_| y.to_vec()).collect();
    close(core(acd(&y, &degenerate))?, 0.5, 1e-12, "acd degenerate paths")?;
    Ok(format!("mmd2 {m:.12}, jsd {j:.12}"))
}

// 2 ------------------------------------------------------------------------

fn filter_correctness() -> Outcome {
    let spec = BandPassSpec::default();
    let fs = spec.sample_rate_hz;
    let c = core(design_bandpass(&spec))?;
    let centre = (spec.low_hz * spec.high_hz).sqrt();
    let g = c.magnitude_at(centre, fs);
    ensure((0.98..=1.0).contains(&g), format!("gain at {centre:.2} Hz is {g}"))?;
    ensure(c.b0 + c.b1 + c.b2 == 0.0, "numerator does not vanish at DC")?;
    ensure(c.b0 - c.b1 + c.b2 == 0.0, "numerator does not vanish at Nyquist")?;
    ensure(c.magnitude_at(0.0, fs) == 0.0, "non-zero DC gain")?;

    let n = (10.0 * fs) as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 4.0 * i as f64 / fs).sin())
        .collect();
    let y = core(apply_filter(&x, &c))?;
    let steady = y[n - (2.0 * fs) as usize..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let analytic = c.magnitude_at(4.0, fs);
    close(steady, analytic, 1e-3, "4 Hz steady-state amplitude vs transfer function")?;
    ensure(steady < 0.15, format!("4 Hz attenuation {steady}"))?;
    Ok(format!("centre gain {g:.6}, 4 Hz amplitude {steady:.4} (analytic {analytic:.4})"))
}

// 3 ------------------------------------------------------------------------

fn recording(samples: Vec<f64>) -> Recording {
    Recording::new("constructed", 4000, samples).expect("finite samples")
}

fn fixture_samples(duration_s: f64, noise_std: f64) -> Vec<f64> {
    let spec = FixtureSpec {
        n_recordings: 1,
        duration_s,
        noise_std,
        ..FixtureSpec::default()
    };
    synth_fixture(&spec).expect("valid fixture").remove(0).samples
}

fn fails(rec: &Recording, which: Criterion) -> Result<bool, String> {
    Ok(core(assess(rec, &QualityThresholds::default()))?.failed_criteria.contains(&which))
}

fn quality_gates() -> Outcome {
    let th = QualityThresholds::default();
    ensure(th.rmssd_max == 0.1 && th.zcr_max == 0.3 && th.peak_window_min_fraction == 0.5, "default thresholds")?;

    close(core(rmssd(&[0.4; 8]))?, 0.0, 0.0, "rmssd constant")?;
    close(core(rmssd(&[0.0, 1.0, 0.0, 1.0]))?, 1.0, 1e-15, "rmssd alternating")?;
    close(core(rmssd(&[0.0, 0.3, 0.0]))?, 0.3, 1e-15, "rmssd spike")?;
    let mut flat = vec![0.05; 9000];
    ensure(!fails(&recording(flat.clone()), Criterion::Rmssd)?, "constant signal fails RMSSD")?;
    flat[4500] = 0.05 + 0.1 * (8999.0f64 / 2.0).sqrt();
    let at_threshold = core(rmssd(&flat))?;
    close(at_threshold, 0.1, 1e-12, "constructed RMSSD near threshold")?;
    let exact = QualityThresholds { rmssd_max: at_threshold, ..th.clone() };
    let r = core(assess(&recording(flat), &exact))?;
    ensure(r.failed_criteria.contains(&Criterion::Rmssd), "RMSSD equal to its threshold must fail")?;

    close(core(zero_crossing_ratio(&[1.0, 2.0, 0.5]))?, 0.0, 0.0, "zcr all positive")?;
    close(core(zero_crossing_ratio(&[1.0, -1.0, 1.0, -1.0]))?, 0.75, 0.0, "zcr alternating")?;
    close(core(zero_crossing_ratio(&[1.0, -1.0, 1.0, 1.0]))?, 0.5, 0.0, "zcr two crossings")?;
    let mut three_in_ten = vec![-0.01; 10];
    three_in_ten[0] = 0.01;
    three_in_ten[2] = 0.01;
    close(core(zero_crossing_ratio(&three_in_ten))?, 0.3, 0.0, "zcr constructed at threshold")?;
    let boundary: Vec<f64> = three_in_ten.iter().cycle().take(9000).copied().collect();
    let exact = QualityThresholds { zcr_max: core(zero_crossing_ratio(&boundary))?, ..th.clone() };
    let r = core(assess(&recording(boundary), &exact))?;
    ensure(!r.failed_criteria.contains(&Criterion::Zcr), "ZCR equal to its threshold must pass")?;
    ensure(fails(&recording(fixture_samples(12.5, 0.5)), Criterion::Zcr)?, "noisy fixture passes ZCR")?;

    let clean = recording(fixture_samples(4.4, 0.0));
    let r = core(assess(&clean, &th))?;
    close(r.peak_window_ratio, 1.0, 0.0, "clean fixture peak ratio")?;
    ensure(r.pass, format!("clean fixture fails: {:?}", r.failed_criteria))?;
    let mut rng = Rng::new(11);
    let noise = recording((0..4 * 8800).map(|_| 2.0 * rng.normal()).collect());
    close(core(assess(&noise, &th))?.peak_window_ratio, 0.0, 0.0, "white noise peak ratio")?;
    let silent = core(assess(&recording(vec![0.0; 20_000]), &th))?;
    ensure(
        silent.failed_criteria == [Criterion::PeakWindows].into_iter().collect(),
        format!("silence fails {:?}", silent.failed_criteria),
    )?;
    let mut half = fixture_samples(2.2, 0.0);
    half.extend(vec![0.0; 8800]);
    let half = core(assess(&recording(half), &th))?;
    close(half.peak_window_ratio, 0.5, 0.0, "half-silent peak ratio")?;
    ensure(
        !half.failed_criteria.contains(&Criterion::PeakWindows),
        "peak ratio of exactly 0.5 must pass",
    )?;
    Ok("at-threshold RMSSD fails, at-threshold ZCR passes, peak ratio 0.5 passes".into())
}

// 4 ------------------------------------------------------------------------

fn dwt() -> Outcome {
    let x: Vec<f64> = (0..203)
        .map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * (i as f64).cos())
        .collect();
    let mut worst_pr = 0.0f64;
    for w in [Wavelet::Db2, Wavelet::Db4, Wavelet::Db8] {
        for (ext, len) in [(Extension::Symmetric, 203), (Extension::Periodic, 202)] {
            let (a, d) = core(dwt_step(&x[..len], w, ext))?;
            let y = core(idwt_step(&a, &d, w, ext, len))?;
            let err = x[..len].iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            worst_pr = worst_pr.max(err);
        }
    }
    ensure(worst_pr < 1e-10, format!("reconstruction error {worst_pr:e}"))?;

    let mut rng = Rng::new(4);
    let mut worst_energy = 0.0f64;
    for w in [Wavelet::Db2, Wavelet::Db4, Wavelet::Db8] {
        let xs: Vec<f64> = (0..256).map(|_| 10.0 * rng.normal()).collect();
        let (a, ds) = core(wavedec(&xs, &DwtConfig { wavelet: w, level: 2 }, Extension::Periodic))?;
        let energy: f64 = a.iter().chain(ds.iter().flatten()).map(|v| v * v).sum();
        let want: f64 = xs.iter().map(|v| v * v).sum();
        worst_energy = worst_energy.max((energy - want).abs());
    }
    ensure(worst_energy < 1e-8, format!("Parseval gap {worst_energy:e}"))?;

    let c = 0.7;
    let approx = core(dwt_approx(&[c; 256], &DwtConfig::default()))?;
    let worst_const = approx.iter().fold(0.0f64, |m, v| m.max((v - 2.0 * c).abs()));
    ensure(worst_const < 1e-9, format!("constant level-2 approximation off by {worst_const:e}"))?;
    Ok(format!(
        "reconstruction {worst_pr:.1e}, Parseval {worst_energy:.1e}, constant {worst_const:.1e}"
    ))
}

// 5 ------------------------------------------------------------------------

fn gradient_checks() -> Outcome {
    const TOL: f64 = 1e-3;
    let mut worst = (String::new(), 0.0f64);
    let mut count = 0;
    for (name, report) in core(gradients::layers())?.into_iter().chain(core(gradients::models())?) {
        ensure(report.checked > 0, format!("{name}: nothing checked"))?;
        ensure(report.max_rel_error < TOL, format!("{name}: {report:?}"))?;
        if report.max_rel_error >= worst.1 {
            worst = (name.to_string(), report.max_rel_error);
        }
        count += 1;
    }
    Ok(format!("{count} checks, worst {} at {:.1e}", worst.0, worst.1))
}

// 6 ------------------------------------------------------------------------

/// Longest lag whose impulse moves the final output, failing if anything
/// before the impulse moves.
fn impulse_reach(m: &WaveNet, t: usize, seed: u64) -> Result<usize, String> {
    let p = core(m.build(&mut Rng::new(seed)))?;
    let q = m.config.quantization_levels;
    let base = m.logits(&p, &vec![0.0; t]);
    let mut reach = 0;
    for k in 0..t {
        for amp in [0.7, -0.7] {
            let mut x = vec![0.0; t];
            x[t - 1 - k] = amp;
            let l = m.logits(&p, &x);
            if (0..q).any(|c| l[c * t + t - 1] != base[c * t + t - 1]) {
                reach = k + 1;
            }
            for pos in 0..t - 1 - k {
                ensure(
                    (0..q).all(|c| l[c * t + pos] == base[c * t + pos]),
                    format!("layers {}: impulse at {} moved output {pos}", m.config.layers, t - 1 - k),
                )?;
            }
        }
    }
    Ok(reach)
}

fn wavenet_structure() -> Outcome {
    let paper = core(WaveNet::new(WaveNetConfig::paper()))?;
    let reach = impulse_reach(&paper, 140, 1)?;
    ensure(reach == 128, format!("full-size receptive field probed as {reach}"))?;
    for layers in 1..=7 {
        let cfg = WaveNetConfig {
            layers,
            residual_channels: 16,
            skip_channels: 16,
            quantization_levels: 16,
            horizon: 1,
            ..WaveNetConfig::paper()
        };
        let m = core(WaveNet::new(cfg))?;
        let r = impulse_reach(&m, 140, 2 + layers as u64)?;
        ensure(r == m.receptive_field(), format!("{layers} layers: reach {r} vs {}", m.receptive_field()))?;
    }
    let m = core(WaveNet::new(WaveNetConfig::desk()))?;
    let p = core(m.build(&mut Rng::new(9)))?;
    let rows = core(sine_corpus(4, 110, (20.0, 40.0), 3))?;
    let mut rng = Rng::new(10);
    for row in rows.iter_rows() {
        for mode in [ForecastMode::Greedy, ForecastMode::Sample] {
            let tail = core(m.forecast_tail(&p, row, mode, &mut rng))?;
            ensure(tail.iter().all(|v| (-1.0..=1.0).contains(v)), format!("forecast out of range: {tail:?}"))?;
        }
    }
    Ok("receptive field 128; causal at 1..=7 layers; forecasts within [-1, 1]".into())
}

// 7 ------------------------------------------------------------------------

fn wavenet_skill() -> Outcome {
    let corpus = core(sine_corpus(200, 110, (25.0, 25.0), 1))?;
    let cfg = desk().wavenet;
    let (train, hold) = core(corpus.split(cfg.holdout_fraction, &mut Rng::new(2)))?;
    let m = core(WaveNet::new(cfg))?;
    let mut p = core(m.build(&mut Rng::new(3)))?;
    core(m.train(&mut p, &train))?;
    let f = core(evaluate_holdout(&m, &p, &hold))?;
    let detail = format!(
        "SMAPE {:.3}, MAE {:.5}, MSE {:.6}, ACD {:.4} on {} holdout rows",
        f.smape_percent,
        f.mae,
        f.mse,
        f.acd,
        hold.rows()
    );
    ensure(f.smape_percent < 10.0 && f.mae < 0.1, detail.clone())?;
    Ok(detail)
}

// 8 ------------------------------------------------------------------------

fn generative_fidelity() -> Outcome {
    let cfg = desk();
    let corpus = core(fixture_corpus(500, 7, &CorpusConfig::default()))?;
    let eval = GenEvalConfig {
        run_tsne: false,
        ..cfg.evaluate.metrics.clone()
    };

    let (a, b) = core(corpus.split(0.5, &mut Rng::new(12)))?;
    let cal = core(generative_report(&a, &b, &eval))?;
    let cal_acc = cal.discriminative.accuracy;
    let mut notes = vec![format!("calibration jsd {:.4} acc {cal_acc:.3}", cal.jsd)];
    let mut failures = Vec::new();
    if !(cal.jsd < 0.02 && (0.4..=0.6).contains(&cal_acc)) {
        failures.push("calibration".to_string());
    }

    let (train, hold) = core(corpus.split(cfg.evaluate.holdout_fraction, &mut Rng::new(11)))?;
    let dgan = core(Dgan::new(cfg.dgan.clone()))?;
    let mut dp = core(dgan.build(&mut Rng::new(1)))?;
    core(dgan.train(&mut dp, &train))?;
    let diffusion = core(Diffusion::new(cfg.diffusion.denoiser.clone(), core(cfg.diffusion.schedule.build())?))?;
    let mut fp = core(diffusion.build(&mut Rng::new(1)))?;
    core(diffusion.train(&mut fp, &train))?;

    for (name, report) in [
        ("dgan", core(dgan.evaluate(&dp, &hold, hold.rows(), &eval, &mut Rng::new(5)))?),
        ("diffusion", core(diffusion.evaluate(&fp, &hold, hold.rows(), &eval, &mut Rng::new(5)))?),
    ] {
        let acc = report.discriminative.accuracy;
        notes.push(format!("{name} jsd {:.4} mmd2 {:.4} acc {acc:.3}", report.jsd, report.mmd2));
        if !(report.jsd < 0.10 && report.mmd2 < 0.05 && (0.4..=0.7).contains(&acc)) {
            failures.push(name.to_string());
        }
    }
    let detail = notes.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} out of bounds: {detail}", failures.join(", ")))
    }
}

// 9 ------------------------------------------------------------------------

fn tsne_checks() -> Outcome {
    let mut rng = Rng::new(3);
    let n_per = 50;
    let pts: Vec<Vec<f64>> = (0..2 * n_per)
        .map(|i| {
            let shift = if i < n_per { 0.0 } else { 50.0 };
            (0..5).map(|k| rng.normal() + if k == 0 { shift } else { 0.0 }).collect()
        })
        .collect();
    let cfg = TsneConfig::default();
    let a = core(tsne(&pts, &cfg))?;
    let b = core(tsne(&pts, &cfg))?;
    ensure(
        a.coords.iter().flatten().zip(b.coords.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()),
        "repeat run differs",
    )?;
    ensure(a.kl_final <= a.kl_initial, format!("KL rose {} -> {}", a.kl_initial, a.kl_final))?;

    let centroid = |r: &[[f64; 2]]| {
        let n = r.len() as f64;
        [r.iter().map(|p| p[0]).sum::<f64>() / n, r.iter().map(|p| p[1]).sum::<f64>() / n]
    };
    let dist = |p: [f64; 2], q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let (lo, hi) = a.coords.split_at(n_per);
    let (ca, cb) = (centroid(lo), centroid(hi));
    let spread = (lo.iter().map(|&p| dist(p, ca)).sum::<f64>() + hi.iter().map(|&p| dist(p, cb)).sum::<f64>())
        / (2 * n_per) as f64;
    let between = dist(ca, cb);
    ensure(between > 5.0 * spread, format!("centroid distance {between} vs spread {spread}"))?;
    let axis = [cb[0] - ca[0], cb[1] - ca[1]];
    let proj = |p: &[f64; 2]| p[0] * axis[0] + p[1] * axis[1];
    let max_a = lo.iter().map(proj).fold(f64::NEG_INFINITY, f64::max);
    let min_b = hi.iter().map(proj).fold(f64::INFINITY, f64::min);
    ensure(max_a < min_b, "blobs overlap along the centroid axis")?;
    Ok(format!(
        "centroid distance {:.1}x spread, KL {:.3} -> {:.3}",
        between / spread,
        a.kl_initial,
        a.kl_final
    ))
}

// 10 -----------------------------------------------------------------------

const CHAIN: &[&[&str]] = &[
    &["fixture"],
    &["ingest"],
    &["qc"],
    &["preprocess"],
    &["segment"],
    &["train", "--model", "diffwave"],
    &["generate", "--model", "diffwave"],
    &["evaluate"],
    &["train", "--model", "wavenet"],
    &["forecast-eval"],
];

const COMPARED: &[&str] = &[
    "segments.csv",
    "diffwave/losses.csv",
    "wavenet/losses.csv",
    "synth_segments.csv",
    "report.json",
    "forecast_metrics.json",
];

fn run_chain(dir: &Path) -> Result<(), String> {
    for args in CHAIN {
        let out = Command::new(env!("CARGO_BIN_EXE_pcg"))
            .args(["--profile", "desk", "--seed", "7"])
            .args(*args)
            .env("PCG_WORKDIR", dir)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            out.status.success(),
            format!("`pcg {}` exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)),
        )?;
    }
    Ok(())
}

fn end_to_end_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_chain(a.path())?;
    run_chain(b.path())?;
    for rel in COMPARED {
        let x = std::fs::read(a.path().join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        let y = std::fs::read(b.path().join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        ensure(!x.is_empty() && x == y, format!("{rel} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", COMPARED.len()))
}

struct Criterion_ {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion_ { id: 1, name: "metric oracles", budget: Duration::from_secs(1), run: metric_oracles },
        Criterion_ { id: 2, name: "filter correctness", budget: Duration::from_secs(5), run: filter_correctness },
        Criterion_ { id: 3, name: "quality gates", budget: Duration::from_secs(5), run: quality_gates },
        Criterion_ { id: 4, name: "dwt", budget: Duration::from_secs(60), run: dwt },
        Criterion_ { id: 5, name: "gradient checks", budget: Duration::from_secs(120), run: gradient_checks },
        Criterion_ { id: 6, name: "wavenet structure", budget: Duration::from_secs(120), run: wavenet_structure },
        Criterion_ { id: 7, name: "wavenet desk skill", budget: Duration::from_secs(600), run: wavenet_skill },
        Criterion_ { id: 8, name: "dgan and diffusion fidelity", budget: Duration::from_secs(1200), run: generative_fidelity },
        Criterion_ { id: 9, name: "t-sne", budget: Duration::from_secs(60), run: tsne_checks },
        Criterion_ { id: 10, name: "end-to-end determinism", budget: Duration::from_secs(300), run: end_to_end_determinism },
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > c.budget => Err(format!("{d}; exceeded {}s budget", c.budget.as_secs())),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {:>2} {tag} {} ({:.1}s): {detail}", c.id, c.name, took.as_secs_f64());
        failed += outcome.is_err() as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
