//! `pcg` command-line pipeline: fixture → ingest → qc → preprocess → segment
//! → train → generate → evaluate, with file handoffs under one workdir.

pub mod config;
pub mod error;
pub mod stages;
pub mod workspace;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{ModelKind, Overrides, PipelineConfig, Profile};
use error::CliError;
use stages::Context;

pub const WORKDIR_ENV: &str = "PCG_WORKDIR";

#[derive(Debug, Parser)]
#[command(name = "pcg", version, about = "Phonocardiogram segmentation, synthesis and evaluation pipeline")]
pub struct Cli {
    /// TOML configuration; keys override the profile defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Hyperparameter profile used for keys the config file does not set.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Accept upstream artifacts produced under a different config hash.
    #[arg(long, global = true)]
    pub force: bool,
    /// Fraction of each recording trimmed from both ends.
    #[arg(long, global = true)]
    pub trim: Option<f64>,
    /// Run the quality gate on band-passed rather than raw signals.
    #[arg(long, global = true)]
    pub qc_after_bandpass: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic recording corpus and its manifest.
    Fixture,
    /// Load Normal-outcome recordings listed in the manifest.
    Ingest,
    /// Score recordings against the quality thresholds.
    Qc,
    /// Band-pass, standardize and downsample passing recordings.
    Preprocess,
    /// Cut fixed-length segments around detected peaks.
    Segment,
    Train {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Diffusion schedule length.
        #[arg(long)]
        steps: Option<usize>,
    },
    Generate {
        #[arg(long, value_enum)]
        model: ModelKind,
        /// Rows to generate; defaults to the holdout size.
        #[arg(short = 'n')]
        n: Option<usize>,
        /// Diffusion schedule length.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Compare the latest generated rows with the holdout rows.
    Evaluate,
    /// Score WaveNet tail forecasts on its holdout rows.
    ForecastEval,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        let steps = match &self.command {
            Command::Train { steps, .. } | Command::Generate { steps, .. } => *steps,
            _ => None,
        };
        Overrides {
            profile: self.profile,
            seed: self.seed,
            diffusion_steps: steps,
            trim_fraction: self.trim,
            qc_after_bandpass: self.qc_after_bandpass,
            workdir: std::env::var_os(WORKDIR_ENV).map(PathBuf::from),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides())?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let ctx = Context::new(cfg, cli.force)?;
    match &cli.command {
        Command::Fixture => stages::fixture(&ctx),
        Command::Ingest => stages::ingest(&ctx),
        Command::Qc => stages::qc(&ctx),
        Command::Preprocess => stages::preprocess_stage(&ctx),
        Command::Segment => stages::segment(&ctx),
        Command::Train { model, .. } => stages::train(&ctx, *model),
        Command::Generate { model, n, .. } => stages::generate(&ctx, *model, *n),
        Command::Evaluate => stages::evaluate(&ctx),
        Command::ForecastEval => stages::forecast_eval(&ctx),
        Command::ShowConfig => unreachable!("handled above"),
    }
}
