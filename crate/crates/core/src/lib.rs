//! Desk-scale pipeline for binary detection of patronizing and condescending
//! language: TSV corpus ingestion, deterministic text cleaning, seeded
//! train/dev splitting, a word-level tokenizer, a miniature text-to-text
//! encoder-decoder trained with teacher forcing, greedy label decoding with
//! out-of-class correction, and macro precision/recall/F1 reporting.
//!
//! Everything is deterministic given the seeds in the relevant configs, and
//! all model arithmetic is 64-bit.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod predictor;
pub mod rng;
pub mod splitter;
pub mod textprep;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};

/// Hex-encoded SHA-256 of a byte string. Used for vocabulary hashes and
/// artifact digests in manifests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
