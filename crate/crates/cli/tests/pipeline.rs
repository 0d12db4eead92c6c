use std::path::Path;
use std::process::{Command, Output};

use pcg_cli::config::{PipelineConfig, Profile};
use pcg_core::ingest::{load_normal_subjects, Manifest};
use pcg_core::pipeline::build_corpus;
use pcg_core::segment::SegmentMatrix;

fn pcg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcg"))
        .args(args)
        .env("PCG_WORKDIR", dir)
        .output()
        .expect("pcg binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = pcg(dir, args);
    assert!(
        out.status.success(),
        "pcg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn through_segment(dir: &Path) {
    for stage in ["fixture", "ingest", "qc", "preprocess", "segment"] {
        ok(dir, &[stage]);
    }
}

#[test]
fn default_chain_produces_a_report() {
    let dir = tempfile::tempdir().unwrap();
    through_segment(dir.path());
    ok(dir.path(), &["train", "--model", "diffwave"]);
    ok(dir.path(), &["generate", "--model", "diffwave", "-n", "16"]);
    ok(dir.path(), &["evaluate"]);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["mmd2", "jsd", "discriminative_accuracy"] {
        assert!(report[key].is_number(), "{key} missing from report");
    }
    assert!(dir.path().join("tsne.csv").is_file());
    let synth = SegmentMatrix::load_csv(dir.path().join("synth_segments.csv"), None).unwrap();
    assert_eq!(synth.rows(), 16);
    for name in ["fixture", "segment", "train-diffwave", "generate-diffwave", "evaluate"] {
        let p = dir.path().join(format!("runs/{name}.json"));
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 0, "{name}");
        assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
    }
}

#[test]
fn cli_segments_match_the_library_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    through_segment(dir.path());
    let cfg = PipelineConfig::for_profile(Profile::Desk);
    let manifest = Manifest::from_path(dir.path().join("fixture/manifest.csv")).unwrap();
    let loaded = load_normal_subjects(&manifest);
    assert!(loaded.row_errors.is_empty());
    let expected = build_corpus(&loaded.recordings, &cfg.corpus).unwrap().segments;
    let got = SegmentMatrix::load_csv(
        dir.path().join("segments.csv"),
        Some(&dir.path().join("segments_provenance.csv")),
    )
    .unwrap();
    assert!(expected.rows() > 0);
    assert_eq!(got, expected);
}

#[test]
fn missing_upstream_exits_3_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcg(dir.path(), &["evaluate"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("generate"), "{err}");
}

#[test]
fn changed_config_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["fixture"]);
    let out = pcg(dir.path(), &["--seed", "8", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    ok(dir.path(), &["--seed", "8", "--force", "ingest"]);
}

#[test]
fn wavenet_cannot_generate_segments() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcg(dir.path(), &["generate", "--model", "wavenet"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[dgan]\nstepz = 3\n").unwrap();
    let out = pcg(dir.path(), &["--config", cfg.to_str().unwrap(), "show-config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn show_config_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcg(dir.path(), &["--seed", "3", "show-config"]);
    assert!(out.status.success());
    let cfg = dir.path().join("shown.toml");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let again = pcg(dir.path(), &["--config", cfg.to_str().unwrap(), "show-config"]);
    assert!(again.status.success());
    assert_eq!(out.stdout, again.stdout);
}
