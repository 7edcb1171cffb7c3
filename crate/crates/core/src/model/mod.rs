//! Miniature encoder-decoder with tied embeddings, multi-head attention,
//! learned relative-position attention biases, scale-only RMS pre-norm
//! residual blocks, teacher-forced cross-entropy, and exact analytic
//! gradients. All arithmetic is f64.
//!
//! Layout of one encoder layer: `x + attn(norm(x))`, then `x + ff(norm(x))`.
//! Decoder layers add a cross-attention block over the encoder output
//! between the causal self-attention and the feed-forward. A final RMS norm
//! closes each stack, and logits are `dec_out @ embedding^T / sqrt(d_model)`.
//!
//! The relative-position bias is a per-head learned table over signed
//! offsets clipped to `±max_rel_distance`; the encoder and decoder each own
//! one table, shared across their layers. Cross-attention carries no
//! position bias.

pub mod math;
mod net;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{chacha8, derive_seed};
use crate::tokenizer::TokenSequence;
use math::Mat;
use rand_distr::{Distribution, Normal};

/// Shape hyperparameters. The desk-scale default trains on a CPU in
/// seconds; see [`ModelConfig::tiny`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers_enc: usize,
    pub n_layers_dec: usize,
    /// Attention offsets are clipped to this magnitude before the bias
    /// table lookup.
    pub max_rel_distance: usize,
    /// Hard cap on source and decoder sequence lengths.
    pub max_seq_len: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale default: 2+2 layers, d_model 64, 4 heads, d_ff 128.
    pub fn tiny(vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            vocab_size,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            n_layers_enc: 2,
            n_layers_dec: 2,
            max_rel_distance: 8,
            max_seq_len: crate::tokenizer::DEFAULT_MAX_SRC_LEN,
            seed,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("n_layers_enc", self.n_layers_enc),
            ("n_layers_dec", self.n_layers_dec),
            ("max_rel_distance", self.max_rel_distance),
            ("max_seq_len", self.max_seq_len),
        ] {
            if value == 0 {
                return Err(Error::Invalid(format!("{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Invalid(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub attn_norm: Vec<f64>,
    pub attn: AttentionParams,
    pub ff_norm: Vec<f64>,
    pub ff_in: Mat,
    pub ff_out: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams {
    pub self_norm: Vec<f64>,
    pub self_attn: AttentionParams,
    pub cross_norm: Vec<f64>,
    pub cross_attn: AttentionParams,
    pub ff_norm: Vec<f64>,
    pub ff_in: Mat,
    pub ff_out: Mat,
}

/// Every trainable array. Gradients and optimizer moments reuse this
/// container, so shapes always mirror the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Token embeddings, `vocab_size x d_model`; also the (tied) output
    /// projection.
    pub embedding: Mat,
    /// `n_heads x (2 * max_rel_distance + 1)`, shared by all encoder
    /// self-attention layers.
    pub enc_rel_bias: Mat,
    /// Same shape, shared by all decoder self-attention layers.
    pub dec_rel_bias: Mat,
    pub encoder: Vec<EncoderLayerParams>,
    pub enc_final_norm: Vec<f64>,
    pub decoder: Vec<DecoderLayerParams>,
    pub dec_final_norm: Vec<f64>,
}

impl ModelParams {
    /// All-zero arrays with the shapes implied by `config`; used for
    /// gradients and optimizer moments.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let table_width = 2 * config.max_rel_distance + 1;
        let attn = || AttentionParams {
            wq: Mat::zeros(d, d),
            wk: Mat::zeros(d, d),
            wv: Mat::zeros(d, d),
            wo: Mat::zeros(d, d),
        };
        ModelParams {
            embedding: Mat::zeros(config.vocab_size, d),
            enc_rel_bias: Mat::zeros(config.n_heads, table_width),
            dec_rel_bias: Mat::zeros(config.n_heads, table_width),
            encoder: (0..config.n_layers_enc)
                .map(|_| EncoderLayerParams {
                    attn_norm: vec![0.0; d],
                    attn: attn(),
                    ff_norm: vec![0.0; d],
                    ff_in: Mat::zeros(d, config.d_ff),
                    ff_out: Mat::zeros(config.d_ff, d),
                })
                .collect(),
            enc_final_norm: vec![0.0; d],
            decoder: (0..config.n_layers_dec)
                .map(|_| DecoderLayerParams {
                    self_norm: vec![0.0; d],
                    self_attn: attn(),
                    cross_norm: vec![0.0; d],
                    cross_attn: attn(),
                    ff_norm: vec![0.0; d],
                    ff_in: Mat::zeros(d, config.d_ff),
                    ff_out: Mat::zeros(config.d_ff, d),
                })
                .collect(),
            dec_final_norm: vec![0.0; d],
        }
    }

    /// Named views of every array in the canonical order used for
    /// initialization draws, optimizer updates, and checkpoint payloads.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("embedding".into(), self.embedding.data()),
            ("enc_rel_bias".into(), self.enc_rel_bias.data()),
            ("dec_rel_bias".into(), self.dec_rel_bias.data()),
        ];
        for (i, layer) in self.encoder.iter().enumerate() {
            out.push((format!("enc.{i}.attn_norm"), &layer.attn_norm));
            out.push((format!("enc.{i}.attn.wq"), layer.attn.wq.data()));
            out.push((format!("enc.{i}.attn.wk"), layer.attn.wk.data()));
            out.push((format!("enc.{i}.attn.wv"), layer.attn.wv.data()));
            out.push((format!("enc.{i}.attn.wo"), layer.attn.wo.data()));
            out.push((format!("enc.{i}.ff_norm"), &layer.ff_norm));
            out.push((format!("enc.{i}.ff_in"), layer.ff_in.data()));
            out.push((format!("enc.{i}.ff_out"), layer.ff_out.data()));
        }
        out.push(("enc.final_norm".into(), &self.enc_final_norm));
        for (i, layer) in self.decoder.iter().enumerate() {
            out.push((format!("dec.{i}.self_norm"), &layer.self_norm));
            out.push((format!("dec.{i}.self.wq"), layer.self_attn.wq.data()));
            out.push((format!("dec.{i}.self.wk"), layer.self_attn.wk.data()));
            out.push((format!("dec.{i}.self.wv"), layer.self_attn.wv.data()));
            out.push((format!("dec.{i}.self.wo"), layer.self_attn.wo.data()));
            out.push((format!("dec.{i}.cross_norm"), &layer.cross_norm));
            out.push((format!("dec.{i}.cross.wq"), layer.cross_attn.wq.data()));
            out.push((format!("dec.{i}.cross.wk"), layer.cross_attn.wk.data()));
            out.push((format!("dec.{i}.cross.wv"), layer.cross_attn.wv.data()));
            out.push((format!("dec.{i}.cross.wo"), layer.cross_attn.wo.data()));
            out.push((format!("dec.{i}.ff_norm"), &layer.ff_norm));
            out.push((format!("dec.{i}.ff_in"), layer.ff_in.data()));
            out.push((format!("dec.{i}.ff_out"), layer.ff_out.data()));
        }
        out.push(("dec.final_norm".into(), &self.dec_final_norm));
        out
    }

    /// Mutable counterpart of [`ModelParams::arrays`], same order.
    pub fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("embedding".into(), self.embedding.data_mut()),
            ("enc_rel_bias".into(), self.enc_rel_bias.data_mut()),
            ("dec_rel_bias".into(), self.dec_rel_bias.data_mut()),
        ];
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            out.push((format!("enc.{i}.attn_norm"), layer.attn_norm.as_mut_slice()));
            out.push((format!("enc.{i}.attn.wq"), layer.attn.wq.data_mut()));
            out.push((format!("enc.{i}.attn.wk"), layer.attn.wk.data_mut()));
            out.push((format!("enc.{i}.attn.wv"), layer.attn.wv.data_mut()));
            out.push((format!("enc.{i}.attn.wo"), layer.attn.wo.data_mut()));
            out.push((format!("enc.{i}.ff_norm"), layer.ff_norm.as_mut_slice()));
            out.push((format!("enc.{i}.ff_in"), layer.ff_in.data_mut()));
            out.push((format!("enc.{i}.ff_out"), layer.ff_out.data_mut()));
        }
        out.push(("enc.final_norm".into(), self.enc_final_norm.as_mut_slice()));
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            out.push((format!("dec.{i}.self_norm"), layer.self_norm.as_mut_slice()));
            out.push((format!("dec.{i}.self.wq"), layer.self_attn.wq.data_mut()));
            out.push((format!("dec.{i}.self.wk"), layer.self_attn.wk.data_mut()));
            out.push((format!("dec.{i}.self.wv"), layer.self_attn.wv.data_mut()));
            out.push((format!("dec.{i}.self.wo"), layer.self_attn.wo.data_mut()));
            out.push((
                format!("dec.{i}.cross_norm"),
                layer.cross_norm.as_mut_slice(),
            ));
            out.push((format!("dec.{i}.cross.wq"), layer.cross_attn.wq.data_mut()));
            out.push((format!("dec.{i}.cross.wk"), layer.cross_attn.wk.data_mut()));
            out.push((format!("dec.{i}.cross.wv"), layer.cross_attn.wv.data_mut()));
            out.push((format!("dec.{i}.cross.wo"), layer.cross_attn.wo.data_mut()));
            out.push((format!("dec.{i}.ff_norm"), layer.ff_norm.as_mut_slice()));
            out.push((format!("dec.{i}.ff_in"), layer.ff_in.data_mut()));
            out.push((format!("dec.{i}.ff_out"), layer.ff_out.data_mut()));
        }
        out.push(("dec.final_norm".into(), self.dec_final_norm.as_mut_slice()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays()
            .iter()
            .all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }

    /// Multiply every entry by `s`.
    pub fn scale_all(&mut self, s: f64) {
        for (_, array) in self.arrays_mut() {
            for v in array {
                *v *= s;
            }
        }
    }

    /// Entry-wise accumulate (`self += other`). Shapes must match.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.arrays();
        for ((_, mine), (_, other)) in self.arrays_mut().into_iter().zip(theirs) {
            assert_eq!(mine.len(), other.len(), "parameter shape mismatch");
            for (a, b) in mine.iter_mut().zip(other) {
                *a += b;
            }
        }
    }
}

/// Deterministic initialization: weight matrices and the embedding draw
/// from a zero-mean normal with scale `1/sqrt(d_model)` in the canonical
/// array order; relative-position bias tables start at zero and norm
/// scales at one.
pub fn init_params(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = chacha8(derive_seed(config.seed, "param-init"));
    let normal = Normal::new(0.0, 1.0 / (config.d_model as f64).sqrt())
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut params = ModelParams::zeros(config);
    for (name, array) in params.arrays_mut() {
        if name.ends_with("norm") {
            array.fill(1.0);
        } else if name.ends_with("rel_bias") {
            array.fill(0.0);
        } else {
            for v in array {
                *v = normal.sample(&mut rng);
            }
        }
    }
    Ok(params)
}

/// Softmax attention: row `i` of the output is the bias-shifted,
/// scale-normalized softmax over visible key positions applied to the
/// value rows. `mask[i][j] = true` marks a visible position (no mask means
/// all visible); `rel_bias` is added to the scaled scores.
pub fn attention(
    queries: &Mat,
    keys: &Mat,
    values: &Mat,
    mask: Option<&[Vec<bool>]>,
    rel_bias: Option<&Mat>,
) -> Result<Mat> {
    if queries.cols() != keys.cols() || keys.rows() != values.rows() {
        return Err(Error::Invalid(format!(
            "attention shape mismatch: q {}x{}, k {}x{}, v {}x{}",
            queries.rows(),
            queries.cols(),
            keys.rows(),
            keys.cols(),
            values.rows(),
            values.cols()
        )));
    }
    if let Some(m) = mask {
        if m.len() != queries.rows() || m.iter().any(|row| row.len() != keys.rows()) {
            return Err(Error::Invalid("attention mask shape mismatch".to_string()));
        }
    }
    if let Some(b) = rel_bias {
        if b.rows() != queries.rows() || b.cols() != keys.rows() {
            return Err(Error::Invalid("attention bias shape mismatch".to_string()));
        }
    }
    let visible = |i: usize, j: usize| mask.is_none_or(|m| m[i][j]);
    let bias = |i: usize, j: usize| rel_bias.map_or(0.0, |b| b.at(i, j));
    let (out, _) = net::attention_core(queries, keys, values, &visible, &bias)?;
    Ok(out)
}

/// Mean token cross-entropy in nats. `pad_mask[t] = true` marks a padding
/// position excluded from the mean (no mask means every position counts).
pub fn cross_entropy(
    logits: &Mat,
    targets: &TokenSequence,
    pad_mask: Option<&[bool]>,
) -> Result<f64> {
    let (sum, count) = net::cross_entropy_sum(logits, &targets.ids, pad_mask)?;
    if count == 0 {
        return Err(Error::Invalid(
            "cross_entropy: every position is padded".to_string(),
        ));
    }
    Ok(sum / count as f64)
}

/// One teacher-forced training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub src: TokenSequence,
    /// Decoder input: the target shifted right behind a PAD start token.
    pub tgt_in: TokenSequence,
    pub targets: TokenSequence,
}

impl Example {
    /// Build the shifted decoder input from a target sequence.
    pub fn teacher_forced(src: TokenSequence, targets: TokenSequence) -> Example {
        let mut tgt_in = vec![crate::tokenizer::PAD_ID];
        tgt_in.extend(&targets.ids[..targets.len().saturating_sub(1)]);
        Example {
            src,
            tgt_in: TokenSequence::new(tgt_in),
            targets,
        }
    }
}

/// Configuration plus parameters; the unit everything downstream consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    /// Freshly initialized model (deterministic in `config.seed`).
    pub fn init(config: ModelConfig) -> Result<Model> {
        let params = init_params(&config)?;
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Model> {
        config.validate()?;
        let expected = ModelParams::zeros(&config);
        let got = params.arrays();
        let want = expected.arrays();
        if got.len() != want.len()
            || got
                .iter()
                .zip(&want)
                .any(|((gn, ga), (wn, wa))| gn != wn || ga.len() != wa.len())
        {
            return Err(Error::Invalid(
                "parameter arrays do not match the configuration".to_string(),
            ));
        }
        Ok(Model { config, params })
    }

    /// Teacher-forced logits, one row per decoder position.
    pub fn forward(&self, src: &TokenSequence, tgt_in: &TokenSequence) -> Result<Mat> {
        let tape = net::run_forward(&self.config, &self.params, &src.ids, &tgt_in.ids)?;
        Ok(tape.logits)
    }

    /// Sum of token negative log-likelihoods and the token count for one
    /// example (no padding at desk scale: every target position counts).
    pub fn example_nll(&self, example: &Example) -> Result<(f64, usize)> {
        let logits = self.forward(&example.src, &example.tgt_in)?;
        net::cross_entropy_sum(&logits, &example.targets.ids, None)
    }

    /// Mean token cross-entropy for one example.
    pub fn example_loss(&self, example: &Example) -> Result<f64> {
        let (sum, count) = self.example_nll(example)?;
        Ok(sum / count as f64)
    }

    /// Exact gradients of the per-example mean token cross-entropy with
    /// respect to every parameter array. Returns (loss, gradients).
    pub fn example_backward(&self, example: &Example) -> Result<(f64, ModelParams)> {
        let (loss, mut grads, count) = self.sum_backward(example)?;
        grads.scale_all(1.0 / count as f64);
        Ok((loss / count as f64, grads))
    }

    /// Gradients of the batch loss: total NLL over all examples divided by
    /// the total token count, accumulated in example order.
    pub fn batch_backward(&self, batch: &[Example]) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".to_string()));
        }
        let mut grads = ModelParams::zeros(&self.config);
        let mut total_nll = 0.0;
        let mut total_tokens = 0usize;
        for example in batch {
            let (nll, example_grads, count) = self.sum_backward(example)?;
            total_nll += nll;
            total_tokens += count;
            grads.add_assign(&example_grads);
        }
        grads.scale_all(1.0 / total_tokens as f64);
        Ok((total_nll / total_tokens as f64, grads))
    }

    /// Mean loss over a set of examples with the same token-weighted
    /// reduction as [`Model::batch_backward`], without gradients.
    pub fn mean_loss(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Invalid("empty evaluation set".to_string()));
        }
        let mut total_nll = 0.0;
        let mut total_tokens = 0usize;
        for example in examples {
            let (nll, count) = self.example_nll(example)?;
            total_nll += nll;
            total_tokens += count;
        }
        Ok(total_nll / total_tokens as f64)
    }

    fn sum_backward(&self, example: &Example) -> Result<(f64, ModelParams, usize)> {
        net::sum_backward(
            &self.config,
            &self.params,
            &example.src.ids,
            &example.tgt_in.ids,
            &example.targets.ids,
        )
    }
}
