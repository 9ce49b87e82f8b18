//! Experiment configuration: defaults, the INI-style file format, and
//! dotted-key overrides.
//!
//! The file format is deliberately flat text — `[section]` headers named
//! after the modules they configure, `key = value` lines, `#`/`;` comments —
//! so configs diff cleanly and parse without a dependency. `set` applies a
//! single `section.key = value` override; the file loader and the CLI's
//! `--set` flags both go through it, so overrides and file keys can never
//! drift apart.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::augment::{AugmentationKind, AugmentationSpec};
use crate::data::SyntheticSpec;
use crate::encoder::ReadoutMode;
use crate::loss::ContrastiveConfig;
use crate::mining::{AltMethod, GamblerConfig};

use super::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    Synthetic,
    Tu,
}

impl DatasetSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetSource::Synthetic => "synthetic",
            DatasetSource::Tu => "tu",
        }
    }
}

impl FromStr for DatasetSource {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DatasetSource::Synthetic),
            "tu" => Ok(DatasetSource::Tu),
            other => Err(PipelineError::InvalidValue {
                key: "dataset.source".into(),
                detail: format!("unknown source {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// TU-format root; empty means AUGCL_DATA_DIR, then ./data.
    pub dir: String,
    pub name: String,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Synthetic,
            dir: String::new(),
            name: "MUTAG".into(),
            synthetic: SyntheticSpec {
                classes: 2,
                graphs_per_class: 40,
                nodes: 24,
                intra_p: 0.3,
                inter_p: 0.06,
            },
        }
    }
}

impl DatasetConfig {
    /// Where TU-format datasets live: the configured dir, else
    /// `AUGCL_DATA_DIR`, else `./data`.
    pub fn data_root(&self) -> std::path::PathBuf {
        if !self.dir.is_empty() {
            return self.dir.clone().into();
        }
        match std::env::var("AUGCL_DATA_DIR") {
            Ok(v) if !v.is_empty() => v.into(),
            _ => "./data".into(),
        }
    }

    pub fn load(&self, seed: u64) -> Result<crate::data::GraphCollection> {
        match self.source {
            DatasetSource::Synthetic => Ok(crate::data::gen_synthetic(&self.synthetic, seed)?),
            DatasetSource::Tu => Ok(crate::data::load_tu_dataset(
                &self.data_root(),
                &self.name,
            )?),
        }
    }

    pub fn describe(&self) -> String {
        match self.source {
            DatasetSource::Synthetic => format!(
                "synthetic-{}x{}",
                self.synthetic.classes, self.synthetic.graphs_per_class
            ),
            DatasetSource::Tu => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSettings {
    pub pool: Vec<AugmentationKind>,
    pub ratio: f64,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            pool: AugmentationKind::ALL.to_vec(),
            ratio: 0.2,
        }
    }
}

impl AugmentSettings {
    pub fn specs(&self) -> crate::augment::Result<Vec<AugmentationSpec>> {
        self.pool
            .iter()
            .map(|&kind| AugmentationSpec::new(kind, self.ratio))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSettings {
    pub layers: usize,
    pub hidden: usize,
    pub projection: usize,
    pub readout: ReadoutMode,
    pub concat_layers: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 32,
            projection: 32,
            readout: ReadoutMode::Sum,
            concat_layers: false,
        }
    }
}

impl EncoderSettings {
    pub fn encoder_config(&self, feature_dim: usize) -> crate::encoder::EncoderConfig {
        let mut cfg = crate::encoder::EncoderConfig::new(feature_dim);
        cfg.layers = self.layers;
        cfg.hidden = self.hidden;
        cfg.projection = self.projection;
        cfg.readout = self.readout;
        cfg.concat_layers = self.concat_layers;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    /// Epoch after which mining runs and the batch composition freezes.
    pub switch_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Skip mining and keep uniform weights throughout.
    pub baseline: bool,
    /// Re-infer weights from the frozen estimator every weighted epoch.
    pub refresh_weights: bool,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            switch_epoch: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            baseline: false,
            refresh_weights: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansSettings {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for KMeansSettings {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iterations: 50,
            tolerance: 1e-6,
        }
    }
}

impl KMeansSettings {
    pub fn with_seed(&self, seed: u64) -> crate::mining::KMeansConfig {
        let mut cfg = crate::mining::KMeansConfig::new(seed);
        cfg.restarts = self.restarts;
        cfg.max_iterations = self.max_iterations;
        cfg.tolerance = self.tolerance;
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaPolicy {
    ReciprocalMean,
    Fixed,
}

impl AlphaPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AlphaPolicy::ReciprocalMean => "reciprocal_mean",
            AlphaPolicy::Fixed => "fixed",
        }
    }
}

impl FromStr for AlphaPolicy {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reciprocal_mean" => Ok(AlphaPolicy::ReciprocalMean),
            "fixed" => Ok(AlphaPolicy::Fixed),
            other => Err(PipelineError::InvalidValue {
                key: "mining.policy".into(),
                detail: format!("unknown policy {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    ExtraClass,
    SoftmaxResponse,
    Entropy,
    Distance,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::ExtraClass => "extra_class",
            Estimator::SoftmaxResponse => "softmax_response",
            Estimator::Entropy => "entropy",
            Estimator::Distance => "distance",
        }
    }

    /// The ablation method this estimator maps to; None for the full model.
    pub fn alt_method(self) -> Option<AltMethod> {
        match self {
            Estimator::ExtraClass => None,
            Estimator::SoftmaxResponse => Some(AltMethod::SoftmaxResponse),
            Estimator::Entropy => Some(AltMethod::Entropy),
            Estimator::Distance => Some(AltMethod::Distance),
        }
    }
}

impl FromStr for Estimator {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extra_class" => Ok(Estimator::ExtraClass),
            "softmax_response" => Ok(Estimator::SoftmaxResponse),
            "entropy" => Ok(Estimator::Entropy),
            "distance" => Ok(Estimator::Distance),
            other => Err(PipelineError::InvalidValue {
                key: "mining.estimator".into(),
                detail: format!("unknown estimator {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningSettings {
    pub policy: AlphaPolicy,
    /// Used when the policy is fixed.
    pub alpha: f64,
    /// Rescale per batch instead of over the pooled uncertainties.
    pub per_batch_alpha: bool,
    pub estimator: Estimator,
}

impl Default for MiningSettings {
    fn default() -> Self {
        Self {
            policy: AlphaPolicy::ReciprocalMean,
            alpha: 1.0,
            per_batch_alpha: false,
            estimator: Estimator::ExtraClass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub folds: usize,
    pub repeats: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.5,
            tolerance: 1e-6,
            max_iterations: 2000,
            folds: 10,
            repeats: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub augment: AugmentSettings,
    pub encoder: EncoderSettings,
    pub train: TrainSettings,
    pub contrastive: ContrastiveConfig,
    pub kmeans: KMeansSettings,
    pub gambler: GamblerConfig,
    pub mining: MiningSettings,
    pub probe: ProbeConfig,
}

impl ExperimentConfig {
    /// Parse an INI-style config on top of the defaults.
    pub fn from_ini(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return Err(PipelineError::Config {
                        line: lineno,
                        detail: format!("unterminated section header {line:?}"),
                    });
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::Config {
                    line: lineno,
                    detail: format!("expected key = value, got {line:?}"),
                });
            };
            if section.is_empty() {
                return Err(PipelineError::Config {
                    line: lineno,
                    detail: "key before any [section] header".into(),
                });
            }
            cfg.set(&format!("{section}.{}", key.trim()), value.trim())
                .map_err(|e| PipelineError::Config {
                    line: lineno,
                    detail: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    /// Apply one `section.key = value` override.
    pub fn set(&mut self, dotted_key: &str, value: &str) -> Result<()> {
        let unknown = || PipelineError::UnknownKey(dotted_key.to_string());
        let (section, key) = dotted_key.split_once('.').ok_or_else(unknown)?;
        match (section, key) {
            ("dataset", "source") => self.dataset.source = value.parse()?,
            ("dataset", "dir") => self.dataset.dir = value.to_string(),
            ("dataset", "name") => self.dataset.name = value.to_string(),
            ("dataset", "classes") => self.dataset.synthetic.classes = parse(dotted_key, value)?,
            ("dataset", "graphs_per_class") => {
                self.dataset.synthetic.graphs_per_class = parse(dotted_key, value)?
            }
            ("dataset", "nodes") => self.dataset.synthetic.nodes = parse(dotted_key, value)?,
            ("dataset", "intra_p") => self.dataset.synthetic.intra_p = parse(dotted_key, value)?,
            ("dataset", "inter_p") => self.dataset.synthetic.inter_p = parse(dotted_key, value)?,
            ("augment", "pool") => {
                let mut pool = Vec::new();
                for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    pool.push(part.parse::<AugmentationKind>().map_err(|e| {
                        PipelineError::InvalidValue {
                            key: dotted_key.to_string(),
                            detail: e.to_string(),
                        }
                    })?);
                }
                self.augment.pool = pool;
            }
            ("augment", "ratio") => self.augment.ratio = parse(dotted_key, value)?,
            ("encoder", "layers") => self.encoder.layers = parse(dotted_key, value)?,
            ("encoder", "hidden") => self.encoder.hidden = parse(dotted_key, value)?,
            ("encoder", "projection") => self.encoder.projection = parse(dotted_key, value)?,
            ("encoder", "readout") => {
                self.encoder.readout =
                    value
                        .parse::<ReadoutMode>()
                        .map_err(|e| PipelineError::InvalidValue {
                            key: dotted_key.to_string(),
                            detail: e.to_string(),
                        })?
            }
            ("encoder", "concat_layers") => {
                self.encoder.concat_layers = parse_bool(dotted_key, value)?
            }
            ("train", "epochs") => self.train.epochs = parse(dotted_key, value)?,
            ("train", "switch_epoch") => self.train.switch_epoch = parse(dotted_key, value)?,
            ("train", "batch_size") => self.train.batch_size = parse(dotted_key, value)?,
            ("train", "learning_rate") => self.train.learning_rate = parse(dotted_key, value)?,
            ("train", "baseline") => self.train.baseline = parse_bool(dotted_key, value)?,
            ("train", "refresh_weights") => {
                self.train.refresh_weights = parse_bool(dotted_key, value)?
            }
            ("train", "seed") => self.train.seed = parse(dotted_key, value)?,
            ("loss", "temperature") => self.contrastive.temperature = parse(dotted_key, value)?,
            ("loss", "symmetric") => self.contrastive.symmetric = parse_bool(dotted_key, value)?,
            ("kmeans", "restarts") => self.kmeans.restarts = parse(dotted_key, value)?,
            ("kmeans", "max_iterations") => {
                self.kmeans.max_iterations = parse(dotted_key, value)?
            }
            ("kmeans", "tolerance") => self.kmeans.tolerance = parse(dotted_key, value)?,
            ("gambler", "reward") => self.gambler.reward = parse(dotted_key, value)?,
            ("gambler", "epochs") => self.gambler.epochs = parse(dotted_key, value)?,
            ("gambler", "layers") => self.gambler.layers = parse(dotted_key, value)?,
            ("gambler", "hidden") => self.gambler.hidden = parse(dotted_key, value)?,
            ("gambler", "learning_rate") => {
                self.gambler.learning_rate = parse(dotted_key, value)?
            }
            ("gambler", "minibatch") => self.gambler.minibatch = parse(dotted_key, value)?,
            ("mining", "policy") => self.mining.policy = value.parse()?,
            ("mining", "alpha") => self.mining.alpha = parse(dotted_key, value)?,
            ("mining", "per_batch_alpha") => {
                self.mining.per_batch_alpha = parse_bool(dotted_key, value)?
            }
            ("mining", "estimator") => self.mining.estimator = value.parse()?,
            ("probe", "l2") => self.probe.l2 = parse(dotted_key, value)?,
            ("probe", "learning_rate") => self.probe.learning_rate = parse(dotted_key, value)?,
            ("probe", "tolerance") => self.probe.tolerance = parse(dotted_key, value)?,
            ("probe", "max_iterations") => self.probe.max_iterations = parse(dotted_key, value)?,
            ("probe", "folds") => self.probe.folds = parse(dotted_key, value)?,
            ("probe", "repeats") => self.probe.repeats = parse(dotted_key, value)?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Render the full config; `from_ini(to_ini(c)) == c`.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[dataset]");
        let _ = writeln!(s, "source = {}", self.dataset.source.as_str());
        let _ = writeln!(s, "dir = {}", self.dataset.dir);
        let _ = writeln!(s, "name = {}", self.dataset.name);
        let _ = writeln!(s, "classes = {}", self.dataset.synthetic.classes);
        let _ = writeln!(
            s,
            "graphs_per_class = {}",
            self.dataset.synthetic.graphs_per_class
        );
        let _ = writeln!(s, "nodes = {}", self.dataset.synthetic.nodes);
        let _ = writeln!(s, "intra_p = {}", self.dataset.synthetic.intra_p);
        let _ = writeln!(s, "inter_p = {}", self.dataset.synthetic.inter_p);
        let _ = writeln!(s);
        let _ = writeln!(s, "[augment]");
        let pool: Vec<&str> = self.augment.pool.iter().map(|k| k.as_str()).collect();
        let _ = writeln!(s, "pool = {}", pool.join(","));
        let _ = writeln!(s, "ratio = {}", self.augment.ratio);
        let _ = writeln!(s);
        let _ = writeln!(s, "[encoder]");
        let _ = writeln!(s, "layers = {}", self.encoder.layers);
        let _ = writeln!(s, "hidden = {}", self.encoder.hidden);
        let _ = writeln!(s, "projection = {}", self.encoder.projection);
        let _ = writeln!(s, "readout = {}", self.encoder.readout.as_str());
        let _ = writeln!(s, "concat_layers = {}", self.encoder.concat_layers);
        let _ = writeln!(s);
        let _ = writeln!(s, "[train]");
        let _ = writeln!(s, "epochs = {}", self.train.epochs);
        let _ = writeln!(s, "switch_epoch = {}", self.train.switch_epoch);
        let _ = writeln!(s, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.train.learning_rate);
        let _ = writeln!(s, "baseline = {}", self.train.baseline);
        let _ = writeln!(s, "refresh_weights = {}", self.train.refresh_weights);
        let _ = writeln!(s, "seed = {}", self.train.seed);
        let _ = writeln!(s);
        let _ = writeln!(s, "[loss]");
        let _ = writeln!(s, "temperature = {}", self.contrastive.temperature);
        let _ = writeln!(s, "symmetric = {}", self.contrastive.symmetric);
        let _ = writeln!(s);
        let _ = writeln!(s, "[kmeans]");
        let _ = writeln!(s, "restarts = {}", self.kmeans.restarts);
        let _ = writeln!(s, "max_iterations = {}", self.kmeans.max_iterations);
        let _ = writeln!(s, "tolerance = {}", self.kmeans.tolerance);
        let _ = writeln!(s);
        let _ = writeln!(s, "[gambler]");
        let _ = writeln!(s, "reward = {}", self.gambler.reward);
        let _ = writeln!(s, "epochs = {}", self.gambler.epochs);
        let _ = writeln!(s, "layers = {}", self.gambler.layers);
        let _ = writeln!(s, "hidden = {}", self.gambler.hidden);
        let _ = writeln!(s, "learning_rate = {}", self.gambler.learning_rate);
        let _ = writeln!(s, "minibatch = {}", self.gambler.minibatch);
        let _ = writeln!(s);
        let _ = writeln!(s, "[mining]");
        let _ = writeln!(s, "policy = {}", self.mining.policy.as_str());
        let _ = writeln!(s, "alpha = {}", self.mining.alpha);
        let _ = writeln!(s, "per_batch_alpha = {}", self.mining.per_batch_alpha);
        let _ = writeln!(s, "estimator = {}", self.mining.estimator.as_str());
        let _ = writeln!(s);
        let _ = writeln!(s, "[probe]");
        let _ = writeln!(s, "l2 = {}", self.probe.l2);
        let _ = writeln!(s, "learning_rate = {}", self.probe.learning_rate);
        let _ = writeln!(s, "tolerance = {}", self.probe.tolerance);
        let _ = writeln!(s, "max_iterations = {}", self.probe.max_iterations);
        let _ = writeln!(s, "folds = {}", self.probe.folds);
        let _ = writeln!(s, "repeats = {}", self.probe.repeats);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |detail: String| Err(PipelineError::InvalidConfig(detail));
        if self.train.epochs == 0 || self.train.switch_epoch == 0 {
            return invalid("epochs and switch_epoch must be positive".into());
        }
        if self.train.switch_epoch >= self.train.epochs {
            return invalid(format!(
                "switch_epoch {} must come before epochs {}",
                self.train.switch_epoch, self.train.epochs
            ));
        }
        if self.train.batch_size < 2 {
            return invalid(format!(
                "batch_size {} leaves no negatives",
                self.train.batch_size
            ));
        }
        if !self.train.learning_rate.is_finite() || self.train.learning_rate <= 0.0 {
            return invalid(format!(
                "learning_rate {} is not positive",
                self.train.learning_rate
            ));
        }
        if self.augment.pool.is_empty() {
            return invalid("augmentation pool is empty".into());
        }
        self.augment.specs().map_err(|e| {
            PipelineError::InvalidConfig(format!("augmentation ratio: {e}"))
        })?;
        if self.encoder.layers == 0 || self.encoder.hidden == 0 || self.encoder.projection == 0 {
            return invalid("encoder dimensions must be positive".into());
        }
        self.contrastive
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if self.kmeans.restarts == 0 || self.kmeans.max_iterations == 0 {
            return invalid("kmeans restarts and max_iterations must be positive".into());
        }
        if !(self.kmeans.tolerance >= 0.0) {
            return invalid(format!("kmeans tolerance {} is negative", self.kmeans.tolerance));
        }
        self.gambler
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        if self.mining.policy == AlphaPolicy::Fixed
            && (!self.mining.alpha.is_finite() || self.mining.alpha <= 0.0)
        {
            return invalid(format!("fixed alpha {} is not positive", self.mining.alpha));
        }
        if self.dataset.source == DatasetSource::Synthetic {
            self.dataset
                .synthetic
                .validate()
                .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
        } else if self.dataset.name.is_empty() {
            return invalid("tu dataset name is empty".into());
        }
        if self.probe.folds < 2 || self.probe.repeats == 0 || self.probe.max_iterations == 0 {
            return invalid("probe needs folds >= 2, repeats >= 1, max_iterations >= 1".into());
        }
        if !(self.probe.l2 >= 0.0) || !(self.probe.learning_rate > 0.0) {
            return invalid("probe l2 must be >= 0 and learning_rate > 0".into());
        }
        Ok(())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| PipelineError::InvalidValue {
        key: key.to_string(),
        detail: format!("{value:?}: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(PipelineError::InvalidValue {
            key: key.to_string(),
            detail: format!("expected a boolean, got {other:?}"),
        }),
    }
}
