//! Greedy label decoding and out-of-class correction.
//!
//! The model emits labels as text. Decoding is greedy (classification
//! targets are one token, so beams buy nothing), and every decoded string
//! is forced into the legal label set: a trimmed decode of "0" or "1" is
//! taken verbatim, anything else falls back to a configurable class. No
//! fuzzy matching; "zero" does not map to 0.

use serde::{Deserialize, Serialize};

use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tokenizer::{decode, encode_source, TokenSequence, Vocabulary, EOS_ID, PAD_ID};
use crate::trainer::Checkpoint;

/// Majority class of the corpus; the default replacement for decodes
/// outside the label set.
pub const DEFAULT_FALLBACK: u8 = 0;

/// Labels are one token plus EOS; a small cap keeps degenerate decodes
/// short.
pub const DEFAULT_DECODE_MAX_LEN: usize = 4;

/// One corrected prediction with its audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub par_id: String,
    /// What the model actually decoded, before correction.
    pub raw_decoded: String,
    pub label: u8,
    /// False when the label came from the fallback rule.
    pub in_class: bool,
}

/// Greedy decode against a live model: emit the argmax token (ties to the
/// lowest id), stop at EOS, after `max_len` emissions, or at the model's
/// sequence cap, whichever comes first.
pub fn greedy_decode_model(
    model: &Model,
    vocab: &Vocabulary,
    src: &TokenSequence,
    max_len: usize,
) -> Result<String> {
    if max_len == 0 {
        return Err(Error::Invalid("max_len must be >= 1".to_string()));
    }
    if vocab.size() != model.config.vocab_size {
        return Err(Error::Invalid(format!(
            "vocabulary size {} does not match model vocab_size {}",
            vocab.size(),
            model.config.vocab_size
        )));
    }
    let mut tgt_in = vec![PAD_ID];
    let mut emitted = Vec::new();
    for _ in 0..max_len.min(model.config.max_seq_len - 1) {
        let logits = model.forward(src, &TokenSequence::new(tgt_in.clone()))?;
        let last = logits.row(logits.rows() - 1);
        let mut best = 0usize;
        for (id, &score) in last.iter().enumerate() {
            if score > last[best] {
                best = id;
            }
        }
        if best == EOS_ID {
            break;
        }
        emitted.push(best);
        tgt_in.push(best);
    }
    decode(&TokenSequence::new(emitted), vocab)
}

/// Greedy decode from a checkpoint after verifying the vocabulary hash.
pub fn greedy_decode(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    src: &TokenSequence,
    max_len: usize,
) -> Result<String> {
    let model = checkpoint_model(checkpoint, vocab)?;
    greedy_decode_model(&model, vocab, src, max_len)
}

/// Normalize a raw decode (whitespace trim only) and map it into the
/// label set; anything else becomes `(fallback, in_class = false)`.
pub fn correct_out_of_class(raw: &str, fallback: u8) -> (u8, bool) {
    match raw.trim() {
        "0" => (0, true),
        "1" => (1, true),
        _ => (fallback, false),
    }
}

/// Decode every record in order and force each decode into the label set.
pub fn predict_file(
    checkpoint: &Checkpoint,
    vocab: &Vocabulary,
    records: &[ParagraphRecord],
    fallback: u8,
) -> Result<Vec<Prediction>> {
    let model = checkpoint_model(checkpoint, vocab)?;
    records
        .iter()
        .map(|rec| {
            let src = encode_source(&rec.text, vocab, model.config.max_seq_len);
            let raw = greedy_decode_model(&model, vocab, &src, DEFAULT_DECODE_MAX_LEN)?;
            let (label, in_class) = correct_out_of_class(&raw, fallback);
            Ok(Prediction {
                par_id: rec.par_id.clone(),
                raw_decoded: raw,
                label,
                in_class,
            })
        })
        .collect()
}

/// Fraction of predictions whose decode fell outside the label set
/// (0 for an empty list).
pub fn out_of_class_rate(predictions: &[Prediction]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let out = predictions.iter().filter(|p| !p.in_class).count();
    out as f64 / predictions.len() as f64
}

/// Submission shape: one integer label per line, LF endings, input order.
pub fn format_label_lines(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&p.label.to_string());
        out.push('\n');
    }
    out
}

/// JSON-lines audit record per prediction: par_id, raw decode, in_class.
pub fn format_audit_jsonl(predictions: &[Prediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(
            &serde_json::json!({
                "par_id": p.par_id,
                "raw_decoded": p.raw_decoded,
                "in_class": p.in_class,
            })
            .to_string(),
        );
        out.push('\n');
    }
    out
}

fn checkpoint_model(checkpoint: &Checkpoint, vocab: &Vocabulary) -> Result<Model> {
    if vocab.content_hash() != checkpoint.vocab_hash {
        return Err(Error::Checkpoint(
            "vocabulary hash does not match the checkpoint".to_string(),
        ));
    }
    Model::from_parts(checkpoint.model_config, checkpoint.params.clone())
}
