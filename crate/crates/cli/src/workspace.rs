//! Workdir layout and per-stage run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ModelKind, PipelineConfig, Profile};
use crate::error::CliError;

pub const FIXTURE_DIR: &str = "fixture";
pub const FIXTURE_MANIFEST: &str = "fixture/manifest.csv";
pub const RECORDINGS: &str = "recordings.csv";
pub const QC: &str = "qc.csv";
pub const SIG_DIR: &str = "sig";
pub const PREPROCESSED: &str = "preprocessed.csv";
pub const SEGMENTS: &str = "segments.csv";
pub const SEGMENTS_PROVENANCE: &str = "segments_provenance.csv";
pub const SYNTH: &str = "synth_segments.csv";
pub const SYNTH_PROVENANCE: &str = "synth_segments_provenance.csv";
pub const REPORT: &str = "report.json";
pub const TSNE: &str = "tsne.csv";
pub const FORECAST_METRICS: &str = "forecast_metrics.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to a stage's outputs; carries the hash of the config that
/// produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub model: Option<ModelKind>,
    pub config_hash: String,
    pub seed: u64,
    pub profile: Profile,
    pub inputs: Vec<String>,
    pub outputs: Vec<ArtifactDigest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub struct Workdir {
    root: PathBuf,
    force: bool,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>, force: bool) -> Result<Self, CliError> {
        let root = root.into();
        fs::create_dir_all(&root)
            .map_err(|e| CliError::Config(format!("workdir {} is not writable: {e}", root.display())))?;
        Ok(Self { root, force })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn model_dir(model: ModelKind) -> &'static str {
        model.name()
    }

    pub fn checkpoint(model: ModelKind) -> String {
        format!("{}/checkpoint.bin", model.name())
    }

    pub fn losses(model: ModelKind) -> String {
        format!("{}/losses.csv", model.name())
    }

    pub fn run_manifest_name(stage: &str, model: Option<ModelKind>) -> String {
        match model {
            Some(m) => format!("runs/{stage}-{}.json", m.name()),
            None => format!("runs/{stage}.json"),
        }
    }

    /// Path of an upstream artifact, or a dependency error naming it.
    pub fn require(&self, rel: &str, stage: &'static str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingArtifact { path: p, stage })
        }
    }

    /// Loads the run manifest of an upstream stage and checks its config hash.
    pub fn upstream(
        &self,
        stage: &'static str,
        model: Option<ModelKind>,
        cfg_hash: &str,
    ) -> Result<RunManifest, CliError> {
        let rel = Self::run_manifest_name(stage, model);
        let path = self.require(&rel, stage)?;
        let text = fs::read_to_string(&path)?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if manifest.config_hash != cfg_hash && !self.force {
            return Err(CliError::HashMismatch {
                path,
                expected: cfg_hash.to_string(),
                found: manifest.config_hash,
            });
        }
        Ok(manifest)
    }

    pub fn ensure_dir(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        fs::create_dir_all(&p)?;
        Ok(p)
    }

    pub fn write_manifest(
        &self,
        stage: &str,
        model: Option<ModelKind>,
        cfg: &PipelineConfig,
        inputs: &[&str],
        outputs: &[&str],
        warnings: Vec<String>,
    ) -> Result<RunManifest, CliError> {
        let mut digests = Vec::with_capacity(outputs.len());
        for rel in outputs {
            digests.push(ArtifactDigest {
                path: rel.to_string(),
                sha256: file_sha256(&self.path(rel))?,
            });
        }
        let manifest = RunManifest {
            stage: stage.to_string(),
            model,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            profile: cfg.profile,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: digests,
            warnings,
        };
        let rel = Self::run_manifest_name(stage, model);
        self.ensure_dir("runs")?;
        fs::write(self.path(&rel), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(manifest)
    }
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// File-name-safe form of a subject id.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upstream_hash_mismatch_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::for_profile(Profile::Desk);
        let wd = Workdir::new(dir.path(), false).unwrap();
        fs::write(wd.path(SEGMENTS), "x\n").unwrap();
        wd.write_manifest("segment", None, &cfg, &[], &[SEGMENTS], vec![]).unwrap();

        assert!(wd.upstream("segment", None, &cfg.hash()).is_ok());
        let err = wd.upstream("segment", None, "other").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let forced = Workdir::new(dir.path(), true).unwrap();
        assert!(forced.upstream("segment", None, "other").is_ok());

        let missing = wd.upstream("generate", None, &cfg.hash()).unwrap_err();
        assert_eq!(missing.exit_code(), 3);
        assert!(missing.to_string().contains("generate.json"));
    }

    #[test]
    fn sanitize_keeps_safe_characters() {
        assert_eq!(sanitize("fx7_001"), "fx7_001");
        assert_eq!(sanitize("a/b c.wav"), "a_b_c_wav");
    }
}
