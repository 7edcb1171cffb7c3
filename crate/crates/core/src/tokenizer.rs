//! Word-level vocabulary and encoding.
//!
//! Tokens are whitespace-delimited words over cleaned text. Ids are dense:
//! the three specials take ids 0..=2, the mandatory tokens (the task prefix
//! and the label strings "0" and "1") take ids 3..=5, and corpus words
//! follow most-frequent-first with lexicographic tie-breaking. A vocabulary
//! serializes as one token per line; line number = id.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;
pub const PREFIX_ID: usize = 3;
pub const LABEL0_ID: usize = 4;
pub const LABEL1_ID: usize = 5;

pub const PAD_TOKEN: &str = "<pad>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";
/// Task prefix prepended to every source sequence. Its trailing space in
/// prose ("classification: ") is a separator, not part of the token.
pub const PREFIX_TOKEN: &str = "classification:";

const SPECIAL_TOKENS: [&str; 3] = [PAD_TOKEN, EOS_TOKEN, UNK_TOKEN];
const MANDATORY_TOKENS: [&str; 3] = [PREFIX_TOKEN, "0", "1"];

/// Smallest legal vocabulary: specials plus mandatory tokens.
pub const MIN_VOCAB_SIZE: usize = SPECIAL_TOKENS.len() + MANDATORY_TOKENS.len();

/// Default cap on encoded source length (prefix and EOS included).
pub const DEFAULT_MAX_SRC_LEN: usize = 64;

/// Immutable token/id mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), id).is_some() {
                return Err(Error::Invalid(format!("duplicate token {token:?}")));
            }
        }
        for (id, expected) in SPECIAL_TOKENS.iter().chain(&MANDATORY_TOKENS).enumerate() {
            if tokens.get(id).map(String::as_str) != Some(*expected) {
                return Err(Error::Invalid(format!(
                    "token id {id} must be {expected:?}"
                )));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| Error::Invalid(format!("token id {id} out of range")))
    }

    /// One token per line, LF endings; line number = id.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for token in &self.tokens {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    /// Inverse of [`Vocabulary::serialize`].
    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::from_tokens(tokens)
    }

    /// SHA-256 of the serialized form; stored in checkpoints so predictions
    /// can refuse a mismatched vocabulary.
    pub fn content_hash(&self) -> String {
        crate::sha256_hex(self.serialize().as_bytes())
    }
}

/// Build a vocabulary from cleaned texts, keeping at most `max_size`
/// tokens (specials and mandatory tokens included in the budget).
pub fn build_vocab<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<Vocabulary> {
    if max_size < MIN_VOCAB_SIZE {
        return Err(Error::Invalid(format!(
            "max_size {max_size} below minimum {MIN_VOCAB_SIZE}"
        )));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for text in texts {
        for word in text.as_ref().split_whitespace() {
            *freq.entry(word).or_insert(0) += 1;
        }
    }
    let mut tokens: Vec<String> = SPECIAL_TOKENS
        .iter()
        .chain(&MANDATORY_TOKENS)
        .map(|s| s.to_string())
        .collect();
    let mut words: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|(w, _)| !MANDATORY_TOKENS.contains(w))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    tokens.extend(
        words
            .into_iter()
            .take(max_size - MIN_VOCAB_SIZE)
            .map(|(w, _)| w.to_string()),
    );
    Vocabulary::from_tokens(tokens)
}

/// A sequence of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Encode source text as `[prefix, words..., EOS]`, mapping unknown words
/// to UNK and truncating word tokens from the tail so the sequence stays
/// within `max_len` (the prefix and EOS always fit).
pub fn encode_source(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let budget = max_len.max(2) - 2;
    let mut ids = vec![PREFIX_ID];
    for word in text.split_whitespace().take(budget) {
        ids.push(vocab.id_of(word).unwrap_or(UNK_ID));
    }
    ids.push(EOS_ID);
    TokenSequence::new(ids)
}

/// Encode a binary label as its string token followed by EOS.
pub fn encode_target(label: u8) -> Result<TokenSequence> {
    let id = match label {
        0 => LABEL0_ID,
        1 => LABEL1_ID,
        other => return Err(Error::Invalid(format!("label {other} outside {{0, 1}}"))),
    };
    Ok(TokenSequence::new(vec![id, EOS_ID]))
}

/// Decode ids to text: tokens joined by single spaces, stopping at the
/// first EOS, skipping PAD. Out-of-range ids are an error.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> Result<String> {
    let mut words = Vec::new();
    for &id in &seq.ids {
        if id >= vocab.size() {
            return Err(Error::Invalid(format!("token id {id} out of range")));
        }
        if id == EOS_ID {
            break;
        }
        if id == PAD_ID {
            continue;
        }
        words.push(vocab.token_of(id)?);
    }
    Ok(words.join(" "))
}
