//! One function per subcommand. Each reads upstream artifacts, writes its own
//! outputs and a run manifest, and never touches another stage's files.

use std::fs;
use std::path::{Path, PathBuf};

use pcg_core::dgan::Dgan;
use pcg_core::diffusion::Diffusion;
use pcg_core::ingest::{load_normal_subjects, read_wav, synth_fixture, trim_edges, write_wav, Manifest, ManifestRow, Outcome, Recording};
use pcg_core::metrics::generative_report;
use pcg_core::nn::{LossCurve, ModelParams, Rng};
use pcg_core::pipeline::qc_view;
use pcg_core::preprocess::{load_sig, preprocess, save_sig};
use pcg_core::quality::{assess, write_qc_csv};
use pcg_core::segment::{segment_signal, SegmentMatrix};
use pcg_core::wavenet::{evaluate_holdout, WaveNet};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, PipelineConfig};
use crate::error::CliError;
use crate::workspace::*;

const SPLIT_GENERATIVE: u64 = 0x7370_6c67;
const SPLIT_FORECAST: u64 = 0x7370_6c66;
const INIT: u64 = 0x696e_6974;
const GENERATE: u64 = 0x6765_6e72;

pub struct Context {
    pub cfg: PipelineConfig,
    pub wd: Workdir,
    hash: String,
}

impl Context {
    pub fn new(cfg: PipelineConfig, force: bool) -> Result<Self, CliError> {
        let wd = Workdir::new(cfg.paths.workdir.clone(), force)?;
        let hash = cfg.hash();
        Ok(Self { cfg, wd, hash })
    }

    fn upstream(&self, stage: &'static str, model: Option<ModelKind>) -> Result<RunManifest, CliError> {
        self.wd.upstream(stage, model, &self.hash)
    }

    fn rng(&self, stream: u64) -> Rng {
        Rng::new(self.cfg.seed).derive(stream)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordingRow {
    subject_id: String,
    wav_path: PathBuf,
    location: String,
    sample_rate_hz: u32,
    n_samples: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SignalRow {
    subject_id: String,
    sig_path: String,
    sample_rate_hz: u32,
}

#[derive(Debug, Deserialize)]
struct QcRow {
    subject_id: String,
    pass: bool,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(rows)
}

fn load_recording(row: &RecordingRow) -> Result<Recording, CliError> {
    let mut rec = read_wav(&row.wav_path)?;
    if rec.sample_rate_hz != row.sample_rate_hz || rec.samples.len() != row.n_samples {
        return Err(CliError::Data(format!(
            "{} changed since ingest; rerun `pcg ingest`",
            row.wav_path.display()
        )));
    }
    rec.subject_id = row.subject_id.clone();
    rec.location = row.location.parse()?;
    rec.outcome = Outcome::Normal;
    Ok(rec)
}

pub fn fixture(ctx: &Context) -> Result<(), CliError> {
    let recs = synth_fixture(&ctx.cfg.fixture)?;
    let dir = ctx.wd.ensure_dir(FIXTURE_DIR)?;
    let mut manifest = Manifest {
        base_dir: dir.clone(),
        rows: Vec::with_capacity(recs.len()),
    };
    let mut outputs = vec![FIXTURE_MANIFEST.to_string()];
    for rec in &recs {
        let name = format!("{}.wav", sanitize(&rec.subject_id));
        write_wav(dir.join(&name), &rec.samples, rec.sample_rate_hz)?;
        outputs.push(format!("{FIXTURE_DIR}/{name}"));
        manifest.rows.push(ManifestRow {
            subject_id: rec.subject_id.clone(),
            wav_path: PathBuf::from(name),
            location: rec.location,
            outcome: rec.outcome,
        });
    }
    fs::write(ctx.wd.path(FIXTURE_MANIFEST), manifest.to_csv())?;
    let outs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.wd.write_manifest("fixture", None, &ctx.cfg, &[], &outs, vec![])?;
    eprintln!("fixture: {} recordings in {}", recs.len(), dir.display());
    Ok(())
}

pub fn ingest(ctx: &Context) -> Result<(), CliError> {
    let manifest_path = match &ctx.cfg.paths.manifest {
        Some(p) => p.clone(),
        None => {
            ctx.upstream("fixture", None)?;
            ctx.wd.require(FIXTURE_MANIFEST, "fixture")?
        }
    };
    let manifest = Manifest::from_path(&manifest_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", manifest_path.display())))?;
    let report = load_normal_subjects(&manifest);
    let mut warnings = report.warnings.clone();
    for e in &report.row_errors {
        warnings.push(format!("row {} ({}): {}", e.row, e.subject_id, e.message));
    }
    let normal: Vec<&ManifestRow> = manifest
        .rows
        .iter()
        .filter(|r| report.recordings.iter().any(|rec| rec.subject_id == r.subject_id))
        .collect();
    let mut rows = Vec::with_capacity(report.recordings.len());
    for rec in &report.recordings {
        let src = normal
            .iter()
            .find(|r| r.subject_id == rec.subject_id)
            .expect("loaded recordings come from manifest rows");
        rows.push(RecordingRow {
            subject_id: rec.subject_id.clone(),
            wav_path: manifest.resolve(src),
            location: rec.location.to_string(),
            sample_rate_hz: rec.sample_rate_hz,
            n_samples: rec.samples.len(),
        });
    }
    write_rows(&ctx.wd.path(RECORDINGS), &rows, &["subject_id", "wav_path", "location", "sample_rate_hz", "n_samples"])?;
    for w in &warnings {
        eprintln!("ingest: warning: {w}");
    }
    let input = manifest_path.display().to_string();
    ctx.wd.write_manifest("ingest", None, &ctx.cfg, &[&input], &[RECORDINGS], warnings)?;
    eprintln!("ingest: {} normal recordings", rows.len());
    Ok(())
}

pub fn qc(ctx: &Context) -> Result<(), CliError> {
    ctx.upstream("ingest", None)?;
    let rows: Vec<RecordingRow> = read_rows(&ctx.wd.require(RECORDINGS, "ingest")?)?;
    let corpus = &ctx.cfg.corpus;
    let mut reports = Vec::with_capacity(rows.len());
    for row in &rows {
        let trimmed = trim_edges(&load_recording(row)?, corpus.trim_fraction)?;
        reports.push(assess(&qc_view(&trimmed, corpus)?, &corpus.quality)?);
    }
    write_qc_csv(fs::File::create(ctx.wd.path(QC))?, &reports)?;
    ctx.wd.write_manifest("qc", None, &ctx.cfg, &[RECORDINGS], &[QC], vec![])?;
    let passed = reports.iter().filter(|r| r.pass).count();
    eprintln!("qc: {passed} of {} recordings pass", reports.len());
    Ok(())
}

pub fn preprocess_stage(ctx: &Context) -> Result<(), CliError> {
    ctx.upstream("ingest", None)?;
    ctx.upstream("qc", None)?;
    let rows: Vec<RecordingRow> = read_rows(&ctx.wd.require(RECORDINGS, "ingest")?)?;
    let qc: Vec<QcRow> = read_rows(&ctx.wd.require(QC, "qc")?)?;
    if qc.len() != rows.len() || rows.iter().zip(&qc).any(|(r, q)| r.subject_id != q.subject_id) {
        return Err(CliError::Data(format!("{QC} does not match {RECORDINGS}; rerun `pcg qc`")));
    }
    ctx.wd.ensure_dir(SIG_DIR)?;
    let mut out = Vec::new();
    let mut outputs = vec![PREPROCESSED.to_string()];
    for (i, (row, q)) in rows.iter().zip(&qc).enumerate() {
        if !q.pass {
            continue;
        }
        let trimmed = trim_edges(&load_recording(row)?, ctx.cfg.corpus.trim_fraction)?;
        let (x, rate) = preprocess(&trimmed.samples, trimmed.sample_rate_hz, &ctx.cfg.corpus.preprocess)?;
        let rel = format!("{SIG_DIR}/{i:04}_{}.sig", sanitize(&row.subject_id));
        save_sig(ctx.wd.path(&rel), &x)?;
        out.push(SignalRow {
            subject_id: row.subject_id.clone(),
            sig_path: rel.clone(),
            sample_rate_hz: rate,
        });
        outputs.push(rel);
    }
    write_rows(&ctx.wd.path(PREPROCESSED), &out, &["subject_id", "sig_path", "sample_rate_hz"])?;
    let outs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.wd.write_manifest("preprocess", None, &ctx.cfg, &[RECORDINGS, QC], &outs, vec![])?;
    eprintln!("preprocess: {} signals", out.len());
    Ok(())
}

pub fn segment(ctx: &Context) -> Result<(), CliError> {
    ctx.upstream("preprocess", None)?;
    let rows: Vec<SignalRow> = read_rows(&ctx.wd.require(PREPROCESSED, "preprocess")?)?;
    let seg_cfg = &ctx.cfg.corpus.segment;
    let mut m = SegmentMatrix::new(seg_cfg.length);
    for row in &rows {
        let x = load_sig(ctx.wd.require(&row.sig_path, "preprocess")?)?;
        m.append(segment_signal(&x, row.sample_rate_hz, seg_cfg, &row.subject_id)?.segments)?;
    }
    m.save_csv(ctx.wd.path(SEGMENTS), ctx.wd.path(SEGMENTS_PROVENANCE))?;
    ctx.wd.write_manifest("segment", None, &ctx.cfg, &[PREPROCESSED], &[SEGMENTS, SEGMENTS_PROVENANCE], vec![])?;
    eprintln!("segment: {} rows of {} samples", m.rows(), m.cols());
    Ok(())
}

fn load_segments(ctx: &Context) -> Result<SegmentMatrix, CliError> {
    ctx.upstream("segment", None)?;
    let values = ctx.wd.require(SEGMENTS, "segment")?;
    let prov = ctx.wd.require(SEGMENTS_PROVENANCE, "segment")?;
    Ok(SegmentMatrix::load_csv(values, Some(&prov))?)
}

/// (train, holdout) for the given model family.
fn split(ctx: &Context, segments: &SegmentMatrix, model: ModelKind) -> Result<(SegmentMatrix, SegmentMatrix), CliError> {
    let (fraction, stream) = match model {
        ModelKind::Wavenet => (ctx.cfg.wavenet.holdout_fraction, SPLIT_FORECAST),
        ModelKind::Dgan | ModelKind::Diffwave => (ctx.cfg.evaluate.holdout_fraction, SPLIT_GENERATIVE),
    };
    let (train, hold) = segments.split(fraction, &mut ctx.rng(stream))?;
    if train.rows() == 0 || hold.rows() == 0 {
        return Err(CliError::Data(format!(
            "{} segments cannot be split into non-empty train and holdout sets",
            segments.rows()
        )));
    }
    Ok((train, hold))
}

enum Model {
    Wavenet(WaveNet),
    Dgan(Dgan),
    Diffwave(Diffusion),
}

impl Model {
    fn new(ctx: &Context, kind: ModelKind) -> Result<Self, CliError> {
        let cfg = &ctx.cfg;
        Ok(match kind {
            ModelKind::Wavenet => Model::Wavenet(WaveNet::new(cfg.wavenet.clone())?),
            ModelKind::Dgan => Model::Dgan(Dgan::new(cfg.dgan.clone())?),
            ModelKind::Diffwave => Model::Diffwave(Diffusion::new(
                cfg.diffusion.denoiser.clone(),
                cfg.diffusion.schedule.build()?,
            )?),
        })
    }

    fn build(&self, rng: &mut Rng) -> pcg_core::Result<ModelParams> {
        match self {
            Model::Wavenet(m) => m.build(rng),
            Model::Dgan(m) => m.build(rng),
            Model::Diffwave(m) => m.build(rng),
        }
    }

    fn train(&self, params: &mut ModelParams, corpus: &SegmentMatrix) -> pcg_core::Result<LossCurve> {
        match self {
            Model::Wavenet(m) => m.train(params, corpus),
            Model::Dgan(m) => m.train(params, corpus).map(|t| t.curve),
            Model::Diffwave(m) => m.train(params, corpus),
        }
    }

    fn load(&self, ctx: &Context, kind: ModelKind) -> Result<ModelParams, CliError> {
        ctx.upstream("train", Some(kind))?;
        let path = ctx.wd.require(&Workdir::checkpoint(kind), "train")?;
        let mut params = self.build(&mut ctx.rng(INIT))?;
        params.assign_from(&ModelParams::load(&path)?)?;
        Ok(params)
    }
}

pub fn train(ctx: &Context, kind: ModelKind) -> Result<(), CliError> {
    let segments = load_segments(ctx)?;
    let (train_rows, _) = split(ctx, &segments, kind)?;
    let model = Model::new(ctx, kind)?;
    let mut params = model.build(&mut ctx.rng(INIT))?;
    let curve = model.train(&mut params, &train_rows)?;
    ctx.wd.ensure_dir(Workdir::model_dir(kind))?;
    let ckpt = Workdir::checkpoint(kind);
    let losses = Workdir::losses(kind);
    params.save(ctx.wd.path(&ckpt))?;
    curve.write_csv(fs::File::create(ctx.wd.path(&losses))?)?;
    ctx.wd.write_manifest("train", Some(kind), &ctx.cfg, &[SEGMENTS], &[&ckpt, &losses], vec![])?;
    eprintln!(
        "train {}: {} rows, {} logged steps, checkpoint {}",
        kind.name(),
        train_rows.rows(),
        curve.len(),
        ckpt
    );
    Ok(())
}

pub fn generate(ctx: &Context, kind: ModelKind, n: Option<usize>) -> Result<(), CliError> {
    let model = Model::new(ctx, kind)?;
    if let Model::Wavenet(_) = model {
        return Err(CliError::Config(
            "wavenet is a forecaster; use `pcg forecast-eval` instead of `generate`".into(),
        ));
    }
    let params = model.load(ctx, kind)?;
    let n = match n {
        Some(n) => n,
        None => split(ctx, &load_segments(ctx)?, kind)?.1.rows(),
    };
    let mut rng = ctx.rng(GENERATE);
    let synth = match &model {
        Model::Dgan(m) => m.generate(&params, n, &mut rng)?,
        Model::Diffwave(m) => m.sample(&params, n, ctx.cfg.corpus.segment.length, &mut rng)?,
        Model::Wavenet(_) => unreachable!("rejected above"),
    };
    synth.save_csv(ctx.wd.path(SYNTH), ctx.wd.path(SYNTH_PROVENANCE))?;
    let ckpt = Workdir::checkpoint(kind);
    ctx.wd.write_manifest("generate", Some(kind), &ctx.cfg, &[&ckpt], &[SYNTH, SYNTH_PROVENANCE], vec![])?;
    // Model-independent pointer so `evaluate` can find the latest generation.
    ctx.wd.write_manifest("generate", None, &ctx.cfg, &[&ckpt], &[SYNTH, SYNTH_PROVENANCE], vec![])?;
    eprintln!("generate {}: {n} rows", kind.name());
    Ok(())
}

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let gen = ctx.upstream("generate", None)?;
    let synth_path = ctx.wd.require(SYNTH, "generate")?;
    let synth = SegmentMatrix::load_csv(synth_path, None)?;
    let kind = gen.model.unwrap_or(ModelKind::Diffwave);
    let (_, hold) = split(ctx, &load_segments(ctx)?, kind)?;
    let report = generative_report(&hold, &synth, &ctx.cfg.evaluate.metrics)?;
    fs::write(ctx.wd.path(REPORT), report.to_json()? + "\n")?;
    report.write_tsne_csv(fs::File::create(ctx.wd.path(TSNE))?)?;
    ctx.wd.write_manifest("evaluate", None, &ctx.cfg, &[SEGMENTS, SYNTH], &[REPORT, TSNE], vec![])?;
    eprintln!(
        "evaluate: jsd {:.4} mmd2 {:.5} discriminative accuracy {:.3}",
        report.jsd, report.mmd2, report.discriminative.accuracy
    );
    Ok(())
}

pub fn forecast_eval(ctx: &Context) -> Result<(), CliError> {
    let model = Model::new(ctx, ModelKind::Wavenet)?;
    let params = model.load(ctx, ModelKind::Wavenet)?;
    let (_, hold) = split(ctx, &load_segments(ctx)?, ModelKind::Wavenet)?;
    let Model::Wavenet(net) = &model else {
        unreachable!("built as wavenet")
    };
    let metrics = evaluate_holdout(net, &params, &hold)?;
    fs::write(ctx.wd.path(FORECAST_METRICS), serde_json::to_string_pretty(&metrics)? + "\n")?;
    let ckpt = Workdir::checkpoint(ModelKind::Wavenet);
    ctx.wd.write_manifest("forecast-eval", None, &ctx.cfg, &[&ckpt, SEGMENTS], &[FORECAST_METRICS], vec![])?;
    eprintln!(
        "forecast-eval: smape {:.3} mae {:.5} mse {:.6} acd {:.4}",
        metrics.smape_percent, metrics.mae, metrics.mse, metrics.acd
    );
    Ok(())
}
