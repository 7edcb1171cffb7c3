//! Checkpoint container.
//!
//! On-disk layout, all integers little-endian:
//!
//! ```text
//! magic "PCLCKPT1" (8 bytes)
//! header length (u64)
//! header JSON: format version, configs, epoch, val loss, vocab hash,
//!              and the (name, len) manifest of parameter arrays
//! payload: each array's f64 values, little-endian, in the canonical
//!          ModelParams order
//! SHA-256 digest of everything above (32 bytes)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"PCLCKPT1";
const FORMAT_VERSION: u32 = 1;

/// Trained parameters plus everything needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    /// 1-based epoch whose dev loss was lowest.
    pub epoch: usize,
    pub val_loss: f64,
    /// Hash of the vocabulary the model was trained with; prediction
    /// refuses a vocabulary whose hash differs.
    pub vocab_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    epoch: usize,
    val_loss: f64,
    vocab_hash: String,
    arrays: Vec<ArrayInfo>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct ArrayInfo {
    name: String,
    len: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let arrays = self.params.arrays();
        let header = Header {
            format_version: FORMAT_VERSION,
            model_config: self.model_config,
            train_config: self.train_config.clone(),
            epoch: self.epoch,
            val_loss: self.val_loss,
            vocab_hash: self.vocab_hash.clone(),
            arrays: arrays
                .iter()
                .map(|(name, a)| ArrayInfo {
                    name: name.clone(),
                    len: a.len(),
                })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let payload_len: usize = arrays.iter().map(|(_, a)| a.len() * 8).sum();
        let mut out = Vec::with_capacity(8 + 8 + header_json.len() + payload_len + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_json);
        for (_, array) in &arrays {
            for v in *array {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = crate::sha256_hex(&out);
        out.extend_from_slice(&hex_to_bytes(&digest));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let fail = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 8 + 8 + 32 {
            return Err(fail("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(fail("bad magic"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if hex_to_bytes(&crate::sha256_hex(body)) != digest {
            return Err(fail("digest mismatch: file is corrupt"));
        }
        let header_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= body.len())
            .ok_or_else(|| fail("header length out of bounds"))?;
        let header: Header = serde_json::from_slice(&body[16..header_end])
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let mut params = ModelParams::zeros(&header.model_config);
        let expected: Vec<ArrayInfo> = params
            .arrays()
            .iter()
            .map(|(name, a)| ArrayInfo {
                name: name.clone(),
                len: a.len(),
            })
            .collect();
        if expected != header.arrays {
            return Err(fail("array manifest does not match the configuration"));
        }
        let payload = &body[header_end..];
        let expected_len: usize = expected.iter().map(|a| a.len * 8).sum();
        if payload.len() != expected_len {
            return Err(fail("payload length mismatch"));
        }
        let mut offset = 0;
        for (_, array) in params.arrays_mut() {
            for v in array {
                *v = f64::from_le_bytes(payload[offset..offset + 8].try_into().unwrap());
                offset += 8;
            }
        }
        if !params.all_finite() {
            return Err(fail("non-finite parameter value"));
        }
        if !header.val_loss.is_finite() {
            return Err(fail("non-finite val_loss"));
        }
        Ok(Checkpoint {
            params,
            model_config: header.model_config,
            train_config: header.train_config,
            epoch: header.epoch,
            val_loss: header.val_loss,
            vocab_hash: header.vocab_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn hex_to_bytes(hex: &str) -> Vec<u8> {
    (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).expect("valid hex"))
        .collect()
}
