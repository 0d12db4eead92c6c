//! Forecast accuracy and generative-fidelity metrics.

mod discriminative;
mod distribution;
mod forecast;
mod tsne;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::SegmentMatrix;

pub use discriminative::{discriminative_score, DiscriminativeConfig, DiscriminativeResult, SequenceClassifier};
pub use distribution::{jsd, jsd_from_masses, median_pairwise_distance, mmd2, Bandwidth, JsdHistogram, MmdConfig};
pub use forecast::{acd, forecast_metrics, mae, mse, quantile_sorted, smape, ForecastMetrics, COVERAGE_LEVELS};
pub use tsne::{conditional_affinities, tsne, TsneConfig, TsneResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenEvalConfig {
    pub mmd: MmdConfig,
    pub jsd_bins: usize,
    pub discriminator: DiscriminativeConfig,
    pub tsne: TsneConfig,
    /// Skip the embedding (it is O(N²) per iteration).
    pub run_tsne: bool,
}

impl Default for GenEvalConfig {
    fn default() -> Self {
        Self {
            mmd: MmdConfig::default(),
            jsd_bins: 50,
            discriminator: DiscriminativeConfig::default(),
            tsne: TsneConfig::default(),
            run_tsne: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSeeds {
    pub discriminator: u64,
    pub tsne: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenEvalReport {
    pub mmd2: f64,
    pub jsd: f64,
    pub discriminative: DiscriminativeResult,
    pub seeds: EvalSeeds,
    pub tsne: Option<TsneResult>,
    /// Label per t-SNE point: 1 real, 0 synthetic.
    pub tsne_labels: Vec<u8>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    mmd2: f64,
    jsd: f64,
    discriminative_accuracy: f64,
    epochs_used: usize,
    seeds: &'a EvalSeeds,
    tsne_kl_initial: Option<f64>,
    tsne_kl_final: Option<f64>,
}

impl GenEvalReport {
    pub fn to_json(&self) -> Result<String> {
        let j = ReportJson {
            mmd2: self.mmd2,
            jsd: self.jsd,
            discriminative_accuracy: self.discriminative.accuracy,
            epochs_used: self.discriminative.epochs_used,
            seeds: &self.seeds,
            tsne_kl_initial: self.tsne.as_ref().map(|t| t.kl_initial),
            tsne_kl_final: self.tsne.as_ref().map(|t| t.kl_final),
        };
        serde_json::to_string_pretty(&j).map_err(|e| Error::Format(e.to_string()))
    }

    /// `x,y,label` rows; empty body when the embedding was skipped.
    pub fn write_tsne_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y", "label"])?;
        if let Some(t) = &self.tsne {
            for (c, l) in t.coords.iter().zip(&self.tsne_labels) {
                wr.write_record([c[0].to_string(), c[1].to_string(), l.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// MMD² on rows as vectors, JSD on pooled amplitudes, held-out discriminator
/// accuracy, and a joint t-SNE embedding.
pub fn generative_report(real: &SegmentMatrix, synth: &SegmentMatrix, cfg: &GenEvalConfig) -> Result<GenEvalReport> {
    if real.rows() == 0 || synth.rows() == 0 {
        return Err(Error::InsufficientData("evaluation needs real and synthetic rows".into()));
    }
    if real.cols() != synth.cols() {
        return Err(Error::shape(format!(
            "real rows have {} values, synthetic rows {}",
            real.cols(),
            synth.cols()
        )));
    }
    let r: Vec<&[f64]> = real.iter_rows().collect();
    let s: Vec<&[f64]> = synth.iter_rows().collect();
    let mmd2 = mmd2(&r, &s, &cfg.mmd)?;
    let jsd = jsd(real.values(), synth.values(), cfg.jsd_bins)?;
    let discriminative = discriminative_score(&r, &s, &cfg.discriminator)?;
    let (tsne, tsne_labels) = if cfg.run_tsne {
        let pts: Vec<&[f64]> = r.iter().chain(&s).copied().collect();
        let labels = std::iter::repeat(1u8).take(r.len()).chain(std::iter::repeat(0u8).take(s.len())).collect();
        (Some(tsne(&pts, &cfg.tsne)?), labels)
    } else {
        (None, Vec::new())
    };
    Ok(GenEvalReport {
        mmd2,
        jsd,
        discriminative,
        seeds: EvalSeeds {
            discriminator: cfg.discriminator.seed,
            tsne: cfg.tsne.seed,
        },
        tsne,
        tsne_labels,
    })
}
