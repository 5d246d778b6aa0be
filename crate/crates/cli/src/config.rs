//! Experiment configuration, read from TOML.
//!
//! Every section is optional; missing keys take the defaults below, which
//! are also what `configs/synthetic.toml` spells out. Unknown keys are
//! rejected so typos surface as validation errors.

use std::path::{Path, PathBuf};

use nkconsensus::baselines::LinearTrainConfig;
use nkconsensus::consensus::ConsensusParams;
use nkconsensus::data::SyntheticSpec;
use nkconsensus::interpret::ClusterParams;
use nkconsensus::math::child_seed;
use nkconsensus::nn::{Activation, BiasInit, InitSpec, ModelConfig, OptimizerKind, WeightInit};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Sub-seed tags. Each stream is `child_seed(seed, tag)`; model `i` uses
/// `MODEL_BASE + i`.
pub mod seed_tags {
    pub const SPLIT: u64 = 7;
    pub const OOD: u64 = 5;
    pub const LOGISTIC: u64 = 3;
    pub const SVM: u64 = 4;
    pub const ATTACK: u64 = 11;
    pub const MODEL_BASE: u64 = 100;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Root for run directories; `--out` overrides it. Not part of the hash.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub training: TrainingDefaults,
    /// `None` means the five canonical models.
    pub models: Option<Vec<ModelEntry>>,
    pub consensus: ConsensusConfig,
    pub attack: AttackConfig,
    pub interpret: InterpretConfig,
    pub baselines: BaselineConfig,
    pub walk: WalkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            training: TrainingDefaults::default(),
            models: None,
            consensus: ConsensusConfig::default(),
            attack: AttackConfig::default(),
            interpret: InterpretConfig::default(),
            baselines: BaselineConfig::default(),
            walk: WalkConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_fraction: f64,
    pub synthetic: Option<SyntheticConfig>,
    pub csv: Option<CsvSource>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            synthetic: Some(SyntheticConfig::default()),
            csv: None,
        }
    }
}

/// Generator settings; the generator seed is the experiment seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub samples: usize,
    pub input_dim: usize,
    pub class_count: usize,
    pub separation: f64,
    pub noise: f64,
    pub latent_rank: usize,
    pub ambient_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            input_dim: 50,
            class_count: 2,
            separation: 2.0,
            noise: 1.0,
            latent_rank: 2,
            ambient_noise: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            samples: self.samples,
            input_dim: self.input_dim,
            class_count: self.class_count,
            separation: self.separation,
            noise: self.noise,
            latent_rank: self.latent_rank,
            ambient_noise: self.ambient_noise,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingDefaults {
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainingDefaults {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
        }
    }
}

/// One ensemble member. `preset` starts from a canonical configuration
/// (0-4); any other key overrides it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelEntry {
    pub preset: Option<usize>,
    pub hidden_width: Option<usize>,
    pub activation: Option<Activation>,
    pub optimizer: Option<OptimizerKind>,
    pub weight_init: Option<WeightInit>,
    pub bias_init: Option<BiasInit>,
    pub bias_constant: Option<f64>,
    pub layer_count: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Curves are written for every k here, with n = number of models.
    pub k_values: Vec<usize>,
    pub p_t_grid: Vec<f64>,
    /// Operating point for OOD, attack and interpretation runs.
    pub k: usize,
    pub p_t: f64,
    pub ood_samples: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            k_values: vec![3, 4, 5],
            p_t_grid: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            k: 5,
            p_t: 0.5,
            ood_samples: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub source_model: usize,
    pub epsilon_grid: Vec<f64>,
    /// The batch uses the smallest grid ε that pushes source accuracy below this.
    pub target_accuracy: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            source_model: 0,
            epsilon_grid: (1..=20).map(|i| i as f64 / 50.0).collect(),
            target_accuracy: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretConfig {
    pub corr_threshold: f64,
    pub min_size: usize,
    pub max_clusters: usize,
    pub group_threshold: f64,
    pub match_threshold: f64,
    /// Diff vectors are computed on the first this-many training samples.
    pub cluster_samples: usize,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            corr_threshold: 0.9,
            min_size: 5,
            max_clusters: 8,
            group_threshold: 0.8,
            match_threshold: 0.5,
            cluster_samples: 1000,
        }
    }
}

impl InterpretConfig {
    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            corr_threshold: self.corr_threshold,
            min_size: self.min_size,
            max_clusters: self.max_clusters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub svm_c: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let lr = LinearTrainConfig::default();
        Self {
            learning_rate: lr.learning_rate,
            epochs: lr.epochs,
            batch_size: lr.batch_size,
            svm_c: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn train_config(&self, seed: u64) -> LinearTrainConfig {
        LinearTrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// Paths start at training sample `origin` and head to each target. With no
/// origin, the first training sample the model classifies correctly is
/// used; with no targets, the next correctly classified sample of the same
/// class and the first of another class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub model: usize,
    pub origin: Option<usize>,
    pub targets: Vec<usize>,
    pub steps: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            model: 0,
            origin: None,
            targets: Vec::new(),
            steps: 41,
        }
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn check_unit_interval(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} not in [0, 1]")))
    }
}

fn check_correlation(field: &str, v: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} not in [-1, 1]")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let span = e.span().map(|s| format!(" (bytes {}..{})", s.start, s.end)).unwrap_or_default();
            invalid("config", format!("{}{span}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Resolved ensemble members, with seeds derived from the experiment seed.
    pub fn model_configs(&self) -> Result<Vec<ModelConfig>> {
        let canonical = ModelConfig::canonical();
        let defaults: Vec<ModelEntry>;
        let entries = match &self.models {
            Some(m) => m.as_slice(),
            None => {
                defaults = (0..canonical.len())
                    .map(|i| ModelEntry {
                        preset: Some(i),
                        ..ModelEntry::default()
                    })
                    .collect();
                &defaults
            }
        };
        entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let field = |name: &str| format!("models[{i}].{name}");
                let preset = e.preset.unwrap_or(0);
                let base = canonical
                    .get(preset)
                    .ok_or_else(|| invalid(field("preset"), format!("{preset} not in 0..{}", canonical.len())))?;
                let optimizer = e.optimizer.unwrap_or(base.optimizer);
                let learning_rate = e.learning_rate.unwrap_or(if e.optimizer.is_some() {
                    optimizer.default_learning_rate()
                } else {
                    base.learning_rate
                });
                let mut init = InitSpec::new(
                    e.weight_init.unwrap_or(base.init.weight_init),
                    e.bias_init.unwrap_or(base.init.bias_init),
                );
                if let Some(c) = e.bias_constant {
                    if init.bias_init != BiasInit::Constant {
                        return Err(invalid(field("bias_constant"), "only valid with bias_init = \"constant\""));
                    }
                    init.constant_value = Some(c);
                }
                let cfg = ModelConfig {
                    hidden_width: e.hidden_width.unwrap_or(base.hidden_width),
                    activation: e.activation.unwrap_or(base.activation),
                    optimizer,
                    init,
                    layer_count: e.layer_count.unwrap_or(base.layer_count),
                    seed: child_seed(self.seed, seed_tags::MODEL_BASE + i as u64),
                    epochs: e.epochs.unwrap_or(self.training.epochs),
                    batch_size: e.batch_size.unwrap_or(self.training.batch_size),
                    learning_rate,
                };
                cfg.validate().map_err(|err| invalid(format!("models[{i}]"), err.to_string()))?;
                Ok(cfg)
            })
            .collect()
    }

    pub fn model_count(&self) -> usize {
        self.models.as_ref().map_or(ModelConfig::canonical().len(), Vec::len)
    }

    pub fn consensus_params(&self) -> Result<ConsensusParams> {
        ConsensusParams::new(self.model_count(), self.consensus.k, self.consensus.p_t)
            .map_err(|e| invalid("consensus.k", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(invalid("data.train_fraction", format!("{} not in (0, 1)", d.train_fraction)));
        }
        match (&d.synthetic, &d.csv) {
            (Some(s), None) => {
                if s.samples < 2 {
                    return Err(invalid("data.synthetic.samples", "need at least 2"));
                }
                if s.input_dim < 2 {
                    return Err(invalid("data.synthetic.input_dim", "need at least 2"));
                }
                if s.class_count < 2 {
                    return Err(invalid("data.synthetic.class_count", "need at least 2"));
                }
                if s.latent_rank == 0 || s.latent_rank > s.input_dim {
                    return Err(invalid(
                        "data.synthetic.latent_rank",
                        format!("{} not in 1..={}", s.latent_rank, s.input_dim),
                    ));
                }
                for (name, v) in [
                    ("separation", s.separation),
                    ("noise", s.noise),
                    ("ambient_noise", s.ambient_noise),
                ] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(invalid(format!("data.synthetic.{name}"), "must be finite and >= 0"));
                    }
                }
            }
            (None, Some(_)) => {}
            _ => return Err(invalid("data", "set exactly one of data.synthetic and data.csv")),
        }

        if matches!(&self.models, Some(m) if m.is_empty()) {
            return Err(invalid("models", "at least one model is required"));
        }
        self.model_configs()?;
        let n = self.model_count();

        let c = &self.consensus;
        if c.k_values.is_empty() {
            return Err(invalid("consensus.k_values", "must not be empty"));
        }
        for (i, &k) in c.k_values.iter().enumerate() {
            if k == 0 || k > n {
                return Err(invalid(format!("consensus.k_values[{i}]"), format!("k = {k} not in 1..={n} (n = model count)")));
            }
        }
        if c.k == 0 || c.k > n {
            return Err(invalid("consensus.k", format!("k = {} not in 1..={n} (n = model count)", c.k)));
        }
        if c.p_t_grid.is_empty() {
            return Err(invalid("consensus.p_t_grid", "must not be empty"));
        }
        for (i, &p) in c.p_t_grid.iter().enumerate() {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid(format!("consensus.p_t_grid[{i}]"), format!("{p} not in [0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&c.p_t) {
            return Err(invalid("consensus.p_t", format!("{} not in [0, 1)", c.p_t)));
        }
        if c.ood_samples == 0 {
            return Err(invalid("consensus.ood_samples", "must be positive"));
        }

        let a = &self.attack;
        if a.source_model >= n {
            return Err(invalid("attack.source_model", format!("{} not in 0..{n}", a.source_model)));
        }
        if a.epsilon_grid.is_empty() {
            return Err(invalid("attack.epsilon_grid", "must not be empty"));
        }
        for (i, &e) in a.epsilon_grid.iter().enumerate() {
            if !(e.is_finite() && e >= 0.0) {
                return Err(invalid(format!("attack.epsilon_grid[{i}]"), "must be finite and >= 0"));
            }
        }
        check_unit_interval("attack.target_accuracy", a.target_accuracy)?;

        let it = &self.interpret;
        check_correlation("interpret.corr_threshold", it.corr_threshold)?;
        check_correlation("interpret.group_threshold", it.group_threshold)?;
        check_correlation("interpret.match_threshold", it.match_threshold)?;
        if it.min_size < 2 {
            return Err(invalid("interpret.min_size", "must be at least 2"));
        }
        if it.max_clusters == 0 {
            return Err(invalid("interpret.max_clusters", "must be positive"));
        }
        if it.cluster_samples < 2 {
            return Err(invalid("interpret.cluster_samples", "must be at least 2"));
        }

        let b = &self.baselines;
        if !(b.learning_rate > 0.0 && b.learning_rate.is_finite()) {
            return Err(invalid("baselines.learning_rate", "must be positive"));
        }
        if b.batch_size == 0 {
            return Err(invalid("baselines.batch_size", "must be positive"));
        }
        if !(b.svm_c > 0.0 && b.svm_c.is_finite()) {
            return Err(invalid("baselines.svm_c", "must be positive"));
        }

        if self.walk.model >= n {
            return Err(invalid("walk.model", format!("{} not in 0..{n}", self.walk.model)));
        }
        if self.walk.steps < 2 {
            return Err(invalid("walk.steps", "must be at least 2"));
        }
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}
