//! Experiment configuration: defaults, then a TOML config file, then
//! command-line flags, each layer overriding the previous one.

use std::path::{Path, PathBuf};

use pcl_core::error::{Error, Result};
use pcl_core::model::ModelConfig;
use pcl_core::trainer::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

/// Model shape knobs (everything in [`ModelConfig`] except the vocabulary
/// size and seed, which resolve at run time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    pub max_rel_distance: usize,
    pub max_seq_len: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let tiny = ModelConfig::tiny(1, 0);
        ModelSettings {
            d_model: tiny.d_model,
            n_heads: tiny.n_heads,
            d_ff: tiny.d_ff,
            n_layers_enc: tiny.n_layers_enc,
            n_layers_dec: tiny.n_layers_dec,
            max_rel_distance: tiny.max_rel_distance,
            max_seq_len: tiny.max_seq_len,
        }
    }
}

impl ModelSettings {
    pub fn to_config(self, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            n_layers_enc: self.n_layers_enc,
            n_layers_dec: self.n_layers_dec,
            max_rel_distance: self.max_rel_distance,
            max_seq_len: self.max_seq_len,
            seed,
        }
    }
}

/// Fully resolved experiment description. One global seed drives the
/// split shuffle, parameter initialization, and training order.
/// Deserializable so a run can be reproduced from its manifest echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Labeled TSV corpus; when absent a synthetic corpus is generated.
    pub train_file: Option<PathBuf>,
    /// Optional unlabeled TSV to predict on with the trained model.
    pub test_file: Option<PathBuf>,
    pub fractions: Vec<f64>,
    pub optimizers: Vec<OptimizerKind>,
    pub holdout_ids: Vec<String>,
    pub fallback_class: u8,
    pub seed: u64,
    pub synth_n: usize,
    pub synth_pos_rate: f64,
    pub max_vocab: usize,
    pub skip_header: bool,
    pub model: ModelSettings,
    /// `train.seed` is overwritten by the global seed during resolution.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train_file: None,
            test_file: None,
            fractions: vec![0.10],
            optimizers: vec![OptimizerKind::Adam],
            holdout_ids: Vec::new(),
            fallback_class: 0,
            seed: 0,
            synth_n: 64,
            synth_pos_rate: 0.25,
            max_vocab: 2000,
            skip_header: false,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
        }
    }
}

/// TOML layer; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub fractions: Option<Vec<f64>>,
    pub optimizers: Option<Vec<String>>,
    pub holdout_ids: Option<Vec<String>>,
    pub fallback_class: Option<u8>,
    pub seed: Option<u64>,
    pub synth_n: Option<usize>,
    pub synth_pos_rate: Option<f64>,
    pub max_vocab: Option<usize>,
    pub skip_header: Option<bool>,
    pub model: Option<ModelFileSection>,
    pub train: Option<TrainFileSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFileSection {
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub n_layers_enc: Option<usize>,
    pub n_layers_dec: Option<usize>,
    pub max_rel_distance: Option<usize>,
    pub max_seq_len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFileSection {
    pub optimizer: Option<String>,
    pub peak_lr: Option<f64>,
    pub warmup_steps: Option<usize>,
    pub total_steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub weight_decay: Option<f64>,
}

/// Command-line overrides; flags win over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub dev_fraction: Option<f64>,
    pub fractions: Option<Vec<f64>>,
    pub optimizer: Option<OptimizerKind>,
    pub holdout_ids: Option<Vec<String>>,
    pub fallback_class: Option<u8>,
    pub seed: Option<u64>,
    pub synth_n: Option<usize>,
    pub synth_pos_rate: Option<f64>,
    pub max_vocab: Option<usize>,
    pub skip_header: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub peak_lr: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ExperimentConfig {
    /// Defaults, then `file`, then `flags`; then the global seed flows
    /// into the training seed and the result is validated.
    pub fn resolve(file: Option<ConfigFile>, flags: &Overrides) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(file) = file {
            cfg.apply_file(file)?;
        }
        cfg.apply_flags(flags);
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<ExperimentConfig> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                Some(
                    toml::from_str::<ConfigFile>(&text)
                        .map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?,
                )
            }
            None => None,
        };
        Self::resolve(file, flags)
    }

    fn apply_file(&mut self, file: ConfigFile) -> Result<()> {
        set(&mut self.train_file, file.train_file.map(Some));
        set(&mut self.test_file, file.test_file.map(Some));
        set(&mut self.fractions, file.fractions);
        if let Some(names) = file.optimizers {
            self.optimizers = names
                .iter()
                .map(|n| n.parse())
                .collect::<Result<Vec<OptimizerKind>>>()?;
        }
        set(&mut self.holdout_ids, file.holdout_ids);
        set(&mut self.fallback_class, file.fallback_class);
        set(&mut self.seed, file.seed);
        set(&mut self.synth_n, file.synth_n);
        set(&mut self.synth_pos_rate, file.synth_pos_rate);
        set(&mut self.max_vocab, file.max_vocab);
        set(&mut self.skip_header, file.skip_header);
        if let Some(m) = file.model {
            set(&mut self.model.d_model, m.d_model);
            set(&mut self.model.n_heads, m.n_heads);
            set(&mut self.model.d_ff, m.d_ff);
            set(&mut self.model.n_layers_enc, m.n_layers_enc);
            set(&mut self.model.n_layers_dec, m.n_layers_dec);
            set(&mut self.model.max_rel_distance, m.max_rel_distance);
            set(&mut self.model.max_seq_len, m.max_seq_len);
        }
        if let Some(t) = file.train {
            if let Some(name) = t.optimizer {
                self.optimizers = vec![name.parse()?];
            }
            set(&mut self.train.peak_lr, t.peak_lr);
            set(&mut self.train.warmup_steps, t.warmup_steps);
            set(&mut self.train.total_steps, t.total_steps);
            set(&mut self.train.batch_size, t.batch_size);
            set(&mut self.train.epochs, t.epochs);
            set(&mut self.train.beta1, t.beta1);
            set(&mut self.train.beta2, t.beta2);
            set(&mut self.train.epsilon, t.epsilon);
            set(&mut self.train.weight_decay, t.weight_decay);
        }
        Ok(())
    }

    fn apply_flags(&mut self, flags: &Overrides) {
        set(&mut self.train_file, flags.train_file.clone().map(Some));
        set(&mut self.test_file, flags.test_file.clone().map(Some));
        if let Some(f) = flags.dev_fraction {
            self.fractions = vec![f];
        }
        set(&mut self.fractions, flags.fractions.clone());
        if let Some(opt) = flags.optimizer {
            self.optimizers = vec![opt];
        }
        set(&mut self.holdout_ids, flags.holdout_ids.clone());
        set(&mut self.fallback_class, flags.fallback_class);
        set(&mut self.seed, flags.seed);
        set(&mut self.synth_n, flags.synth_n);
        set(&mut self.synth_pos_rate, flags.synth_pos_rate);
        set(&mut self.max_vocab, flags.max_vocab);
        set(&mut self.skip_header, flags.skip_header);
        set(&mut self.train.epochs, flags.epochs);
        set(&mut self.train.batch_size, flags.batch_size);
        set(&mut self.train.peak_lr, flags.peak_lr);
    }

    fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::Invalid("at least one dev fraction".to_string()));
        }
        for &f in &self.fractions {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Invalid(format!("dev fraction {f} outside (0, 1)")));
            }
        }
        if self.optimizers.is_empty() {
            return Err(Error::Invalid("at least one optimizer".to_string()));
        }
        if self.fallback_class > 1 {
            return Err(Error::Invalid(format!(
                "fallback class {} outside {{0, 1}}",
                self.fallback_class
            )));
        }
        if !(0.0..=1.0).contains(&self.synth_pos_rate) {
            return Err(Error::Invalid(format!(
                "synth_pos_rate {} outside [0, 1]",
                self.synth_pos_rate
            )));
        }
        Ok(())
    }
}
