//! End-to-end experiment plumbing: configuration, the pretraining loop with
//! the mining phase, the linear evaluation probe, and report artifacts.

pub mod config;
pub mod probe;
pub mod train;

pub use config::{
    AlphaPolicy, AugmentSettings, DatasetConfig, DatasetSource, EncoderSettings, Estimator,
    ExperimentConfig, KMeansSettings, MiningSettings, ProbeConfig, TrainSettings,
};
pub use probe::{linear_probe_eval, ProbeOutcome};
pub use train::{
    embed_all, mine_phase, pretrain, MiningCounters, MiningSummary, PretrainOutcome, WeightCache,
};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config line {line}: {detail}")]
    Config { line: usize, detail: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {detail}")]
    InvalidValue { key: String, detail: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training split of fold {fold} holds a single class")]
    SingleClassFold { fold: usize },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Mining(#[from] crate::mining::MiningError),
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Everything one experiment produced, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub dataset: String,
    pub graphs: usize,
    /// The full configuration echoed back in its file format.
    pub config: String,
    /// Mean contrastive loss per epoch, in epoch order.
    pub loss_curve: Vec<f64>,
    pub mining: Option<MiningSummary>,
    pub counters: MiningCounters,
    pub fold_accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    /// Wall-clock phase timings; excluded from determinism comparisons.
    pub timings_ms: BTreeMap<String, u64>,
    /// Unix seconds at completion; excluded from determinism comparisons.
    pub timestamp: u64,
}

impl RunReport {
    /// The report as JSON with wall-clock fields blanked, so two runs of the
    /// same configuration compare byte-for-byte.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut stripped = self.clone();
        stripped.timings_ms.clear();
        stripped.timestamp = 0;
        Ok(serde_json::to_string_pretty(&stripped)?)
    }
}

/// Pretrain, embed, probe, and write `report.json`, `loss.csv`,
/// `config.ini`, and the encoder checkpoint into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let data = cfg.dataset.load(cfg.train.seed)?;

    let phase = Instant::now();
    let outcome = pretrain(cfg, &data)?;
    let pretrain_ms = phase.elapsed().as_millis() as u64;

    let phase = Instant::now();
    let (embeddings, labels) = embed_all(&outcome.params, &data)?;
    let embed_ms = phase.elapsed().as_millis() as u64;

    let phase = Instant::now();
    let probe = linear_probe_eval(&embeddings, &labels, &cfg.probe, cfg.train.seed)?;
    let probe_ms = phase.elapsed().as_millis() as u64;

    let mut timings_ms = BTreeMap::new();
    timings_ms.insert("pretrain".to_string(), pretrain_ms);
    timings_ms.insert("embed".to_string(), embed_ms);
    timings_ms.insert("probe".to_string(), probe_ms);
    timings_ms.insert("total".to_string(), started.elapsed().as_millis() as u64);

    let report = RunReport {
        seed: cfg.train.seed,
        dataset: cfg.dataset.describe(),
        graphs: data.len(),
        config: cfg.to_ini(),
        loss_curve: outcome.loss_curve.clone(),
        mining: outcome.mining.clone(),
        counters: outcome.counters,
        fold_accuracies: probe.fold_accuracies.clone(),
        accuracy_mean: probe.mean,
        accuracy_std: probe.std,
        timings_ms,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };

    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(out_dir.join("loss.csv"), loss_csv(&report.loss_curve))?;
    std::fs::write(out_dir.join("config.ini"), cfg.to_ini())?;
    outcome.params.save(&out_dir.join("encoder.bin"))?;
    Ok(report)
}

fn loss_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", epoch + 1, loss));
    }
    out
}
