//! Optimizers (Adam, AdamW), the linear warmup/decay schedule, the epoch
//! training loop with per-epoch validation, and lowest-val-loss checkpoint
//! selection.

mod checkpoint;

pub use checkpoint::Checkpoint;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};
use crate::model::{Example, Model, ModelConfig, ModelParams};
use crate::predictor;
use crate::rng::{derive_seed, SeededRng};
use crate::tokenizer::{encode_source, encode_target, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Adam => write!(f, "adam"),
            OptimizerKind::AdamW => write!(f, "adamw"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(Error::Invalid(format!(
                "unknown optimizer {other:?} (expected adam or adamw)"
            ))),
        }
    }
}

/// Training hyperparameters.
///
/// `total_steps == 0` means "derive the schedule from the data": the
/// training loop sets `total_steps = epochs * ceil(n_train / batch_size)`
/// and `warmup_steps = total_steps / 10`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay coefficient; only AdamW reads it.
    pub weight_decay: f64,
    /// Seed for the per-epoch shuffle of training order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            peak_lr: 2e-4,
            warmup_steps: 0,
            total_steps: 0,
            batch_size: 16,
            epochs: 3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Concrete copy of this config for a training set of `n_train`
    /// examples, with the auto schedule resolved and invariants checked.
    pub fn resolved(&self, n_train: usize) -> Result<TrainConfig> {
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be >= 1".to_string()));
        }
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be >= 1".to_string()));
        }
        if !self.peak_lr.is_finite() || self.peak_lr <= 0.0 {
            return Err(Error::Invalid("peak_lr must be positive".to_string()));
        }
        let planned = self.epochs * n_train.div_ceil(self.batch_size);
        let mut cfg = self.clone();
        if cfg.total_steps == 0 {
            cfg.total_steps = planned;
            cfg.warmup_steps = planned / 10;
        }
        if cfg.warmup_steps > cfg.total_steps {
            return Err(Error::Invalid(format!(
                "warmup_steps {} exceeds total_steps {}",
                cfg.warmup_steps, cfg.total_steps
            )));
        }
        if cfg.total_steps < planned {
            return Err(Error::Invalid(format!(
                "total_steps {} shorter than the {planned} planned optimizer steps",
                cfg.total_steps
            )));
        }
        Ok(cfg)
    }
}

/// Learning rate at an optimizer step: linear from 0 to `peak_lr` over
/// `[0, warmup_steps]`, then linear back to 0 over
/// `[warmup_steps, total_steps]`. Steps past `total_steps` are an error.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::Invalid(format!(
            "step {step} past total_steps {}",
            cfg.total_steps
        )));
    }
    if cfg.warmup_steps > cfg.total_steps {
        return Err(Error::Invalid(format!(
            "warmup_steps {} exceeds total_steps {}",
            cfg.warmup_steps, cfg.total_steps
        )));
    }
    if step <= cfg.warmup_steps && cfg.warmup_steps > 0 {
        Ok(cfg.peak_lr * step as f64 / cfg.warmup_steps as f64)
    } else if cfg.total_steps == cfg.warmup_steps {
        // Degenerate flat schedule (total == warmup); only step == total
        // reaches here.
        Ok(cfg.peak_lr)
    } else {
        Ok(cfg.peak_lr * (cfg.total_steps - step) as f64
            / (cfg.total_steps - cfg.warmup_steps) as f64)
    }
}

/// Adam moment estimates, shaped exactly like the parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step_count: usize,
}

impl OptimizerState {
    pub fn new(config: &ModelConfig) -> Self {
        OptimizerState {
            m: ModelParams::zeros(config),
            v: ModelParams::zeros(config),
            step_count: 0,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    apply_update(params, grads, state, lr, cfg, 0.0)
}

/// Adam plus decoupled weight decay: `p -= lr * weight_decay * p` applied
/// independently of the gradient path.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    apply_update(params, grads, state, lr, cfg, cfg.weight_decay)
}

fn apply_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainConfig,
    weight_decay: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Training(
            "non-finite gradient; optimizer step aborted".to_string(),
        ));
    }
    state.step_count += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step_count as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step_count as i32);
    let grad_arrays = grads.arrays();
    let mut m_arrays = state.m.arrays_mut();
    let mut v_arrays = state.v.arrays_mut();
    for (idx, (_, p)) in params.arrays_mut().into_iter().enumerate() {
        let g = grad_arrays[idx].1;
        let m = &mut m_arrays[idx].1;
        let v = &mut v_arrays[idx].1;
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * weight_decay * p[i];
            p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Loss and out-of-class trace for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Token-weighted mean of the batch losses seen during the epoch.
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Fraction of dev decodes outside the label set at this epoch.
    pub dev_out_of_class_rate: f64,
}

/// Selected checkpoint plus the full per-epoch trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Encode labeled records as teacher-forced examples.
pub fn encode_records(
    records: &[ParagraphRecord],
    vocab: &Vocabulary,
    max_src_len: usize,
) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|rec| {
            let label = rec
                .binary_label
                .ok_or_else(|| Error::Invalid(format!("record {:?} is unlabeled", rec.par_id)))?;
            let src = encode_source(&rec.text, vocab, max_src_len);
            let targets = encode_target(label)?;
            Ok(Example::teacher_forced(src, targets))
        })
        .collect()
}

/// Run the full training loop and return the checkpoint of the epoch with
/// the lowest dev loss (ties resolved to the earlier epoch) along with the
/// per-epoch history.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &[ParagraphRecord],
    dev_set: &[ParagraphRecord],
    vocab: &Vocabulary,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Invalid("empty training set".to_string()));
    }
    if dev_set.is_empty() {
        return Err(Error::Invalid(
            "empty dev set: checkpoint selection is undefined".to_string(),
        ));
    }
    let cfg = train_cfg.resolved(train_set.len())?;
    let train_examples = encode_records(train_set, vocab, model_cfg.max_seq_len)?;
    let dev_examples = encode_records(dev_set, vocab, model_cfg.max_seq_len)?;

    let mut model = Model::init(*model_cfg)?;
    let mut state = OptimizerState::new(model_cfg);
    let mut rng = SeededRng::new(derive_seed(cfg.seed, "train-shuffle"));
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut step = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_examples[i].clone()).collect();
            let (loss, grads) = model.batch_backward(&batch)?;
            let lr = lr_at(step, &cfg)?;
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(&mut model.params, &grads, &mut state, lr, &cfg)?,
                OptimizerKind::AdamW => {
                    adamw_step(&mut model.params, &grads, &mut state, lr, &cfg)?
                }
            }
            step += 1;
            let tokens: usize = batch.iter().map(|e| e.targets.len()).sum();
            epoch_nll += loss * tokens as f64;
            epoch_tokens += tokens;
        }
        let train_loss = epoch_nll / epoch_tokens as f64;
        let dev_loss = model.mean_loss(&dev_examples)?;
        if !dev_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite dev loss at epoch {epoch}"
            )));
        }
        let mut out_of_class = 0usize;
        for example in &dev_examples {
            let raw = predictor::greedy_decode_model(
                &model,
                vocab,
                &example.src,
                predictor::DEFAULT_DECODE_MAX_LEN,
            )?;
            if !predictor::correct_out_of_class(&raw, 0).1 {
                out_of_class += 1;
            }
        }
        let stats = EpochStats {
            epoch,
            train_loss,
            dev_loss,
            dev_out_of_class_rate: out_of_class as f64 / dev_examples.len() as f64,
        };
        history.push(stats);
        if best.as_ref().is_none_or(|(loss, _, _)| dev_loss < *loss) {
            best = Some((dev_loss, epoch, model.params.clone()));
        }
    }

    let (val_loss, epoch, params) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            model_config: *model_cfg,
            train_config: cfg,
            epoch,
            val_loss,
            vocab_hash: vocab.content_hash(),
        },
        history,
    })
}
