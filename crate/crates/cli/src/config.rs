use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pcg_core::dgan::DganConfig;
use pcg_core::diffusion::{DenoiserConfig, NoiseSchedule};
use pcg_core::ingest::FixtureSpec;
use pcg_core::metrics::GenEvalConfig;
use pcg_core::pipeline::CorpusConfig;
use pcg_core::wavenet::WaveNetConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wavenet,
    Dgan,
    Diffwave,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Wavenet => "wavenet",
            ModelKind::Dgan => "dgan",
            ModelKind::Diffwave => "diffwave",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Dataset manifest; `fixture` output is used when absent.
    pub manifest: Option<PathBuf>,
    pub workdir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleConfig {
    pub fn build(&self) -> pcg_core::Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// Fraction of segments held out from generator training as the real
    /// comparison set.
    pub holdout_fraction: f64,
    pub metrics: GenEvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub profile: Profile,
    pub paths: Paths,
    pub fixture: FixtureSpec,
    pub corpus: CorpusConfig,
    pub wavenet: WaveNetConfig,
    pub dgan: DganConfig,
    pub diffusion: DiffusionSection,
    pub evaluate: EvaluateSection,
}

impl PipelineConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (wavenet, dgan, denoiser, beta_end) = match profile {
            Profile::Paper => (WaveNetConfig::paper(), DganConfig::paper(), DenoiserConfig::default(), 0.05),
            Profile::Desk => (WaveNetConfig::desk(), DganConfig::desk(), DenoiserConfig::desk(), 0.2),
        };
        Self {
            seed: 0,
            profile,
            paths: Paths {
                manifest: None,
                workdir: PathBuf::from("work"),
            },
            fixture: FixtureSpec::default(),
            corpus: CorpusConfig::default(),
            wavenet,
            dgan,
            diffusion: DiffusionSection {
                schedule: ScheduleConfig {
                    steps: 50,
                    beta_start: 1e-4,
                    beta_end,
                },
                denoiser,
            },
            evaluate: EvaluateSection {
                holdout_fraction: 0.4,
                metrics: GenEvalConfig::default(),
            },
        }
    }

    /// Profile defaults, overlaid with the file's keys, then with CLI overrides.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let user: toml::Table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let profile = match overrides.profile {
            Some(p) => p,
            None => match user.get("profile") {
                Some(v) => v
                    .clone()
                    .try_into()
                    .map_err(|e| CliError::Config(format!("profile: {e}")))?,
                None => Profile::Desk,
            },
        };
        let base = toml::Table::try_from(Self::for_profile(profile))
            .map_err(|e| CliError::Config(format!("cannot serialize defaults: {e}")))?;
        let mut merged = toml::Value::Table(base);
        merge(&mut merged, toml::Value::Table(user));
        let mut cfg: PipelineConfig = merged
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.profile = profile;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(steps) = overrides.diffusion_steps {
            cfg.diffusion.schedule.steps = steps;
        }
        if let Some(f) = overrides.trim_fraction {
            cfg.corpus.trim_fraction = f;
        }
        if overrides.qc_after_bandpass {
            cfg.corpus.qc_after_bandpass = true;
        }
        if let Some(dir) = &overrides.workdir {
            cfg.paths.workdir = dir.clone();
        }
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    fn propagate_seed(&mut self) {
        self.wavenet.seed = self.seed;
        self.dgan.seed = self.seed;
        self.diffusion.denoiser.seed = self.seed;
        self.evaluate.metrics.discriminator.seed = self.seed;
        self.evaluate.metrics.tsne.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check = |r: pcg_core::Result<()>, what: &str| r.map_err(|e| CliError::Config(format!("{what}: {e}")));
        check(self.fixture.validate(), "fixture")?;
        check(self.corpus.quality.validate(), "corpus.quality")?;
        check(self.wavenet.validate(), "wavenet")?;
        check(self.dgan.validate(), "dgan")?;
        check(self.diffusion.denoiser.validate(), "diffusion.denoiser")?;
        check(self.diffusion.schedule.build().map(|_| ()), "diffusion.schedule")?;
        if !(0.0..0.5).contains(&self.corpus.trim_fraction) {
            return Err(CliError::Config("corpus.trim_fraction must lie in [0, 0.5)".into()));
        }
        let h = self.evaluate.holdout_fraction;
        if !(h > 0.0 && h < 1.0) {
            return Err(CliError::Config("evaluate.holdout_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 over everything except filesystem paths.
    pub fn hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.paths = Paths {
            manifest: None,
            workdir: PathBuf::new(),
        };
        let bytes = serde_json::to_vec(&hashed).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub diffusion_steps: Option<usize>,
    pub trim_fraction: Option<f64>,
    pub qc_after_bandpass: bool,
    pub workdir: Option<PathBuf>,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
