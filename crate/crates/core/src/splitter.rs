//! Seeded train/dev splitting with optional holdout injection.
//!
//! The shuffle is Fisher-Yates over a ChaCha8 stream (see [`crate::rng`]),
//! so a `(records, spec)` pair always produces the same split. Dev size is
//! `floor(dev_fraction * N)`, computed before any holdout injection.

use crate::corpus::ParagraphRecord;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};

/// The dev fractions used by the ablation grid.
pub const ABLATION_FRACTIONS: [f64; 4] = [0.05, 0.10, 0.15, 0.20];

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Fraction of records moved to dev, in `[0, 1)`.
    pub dev_fraction: f64,
    pub seed: u64,
    /// Records forced into the dev set after the base split.
    pub holdout_ids: Vec<String>,
    /// Shuffle and split each class separately (off by default; per-class
    /// dev sizes are `floor(dev_fraction * N_class)`).
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(dev_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            dev_fraction,
            seed,
            holdout_ids: Vec::new(),
            stratified: false,
        }
    }
}

/// Shuffle and split records into (train, dev), then move any holdout
/// records into dev. Train and dev keep the shuffled order.
pub fn split(
    records: &[ParagraphRecord],
    spec: &SplitSpec,
) -> Result<(Vec<ParagraphRecord>, Vec<ParagraphRecord>)> {
    if records.is_empty() {
        return Err(Error::Invalid("cannot split an empty corpus".to_string()));
    }
    if !(0.0..1.0).contains(&spec.dev_fraction) {
        return Err(Error::Invalid(format!(
            "dev_fraction {} outside [0, 1)",
            spec.dev_fraction
        )));
    }
    for id in &spec.holdout_ids {
        if !records.iter().any(|r| &r.par_id == id) {
            return Err(Error::Invalid(format!("unknown holdout id {id:?}")));
        }
    }

    let mut rng = SeededRng::new(derive_seed(spec.seed, "split-shuffle"));
    let (train, dev) = if spec.stratified {
        let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, rec) in records.iter().enumerate() {
            match rec.binary_label {
                Some(c @ (0 | 1)) => classes[c as usize].push(i),
                _ => {
                    return Err(Error::Invalid(format!(
                        "stratified split requires binary labels (record {:?})",
                        rec.par_id
                    )))
                }
            }
        }
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for class in &mut classes {
            rng.shuffle(class);
            let d = (spec.dev_fraction * class.len() as f64).floor() as usize;
            dev.extend(class[..d].iter().map(|&i| records[i].clone()));
            train.extend(class[d..].iter().map(|&i| records[i].clone()));
        }
        (train, dev)
    } else {
        let mut order: Vec<usize> = (0..records.len()).collect();
        rng.shuffle(&mut order);
        let d = (spec.dev_fraction * records.len() as f64).floor() as usize;
        let dev = order[..d].iter().map(|&i| records[i].clone()).collect();
        let train = order[d..].iter().map(|&i| records[i].clone()).collect();
        (train, dev)
    };

    inject_holdout(train, dev, &spec.holdout_ids)
}

/// Move every holdout record from train into dev. Records already in dev
/// stay put; an id found in neither list is an error. Moved records are
/// appended to dev in holdout-list order.
pub fn inject_holdout(
    mut train: Vec<ParagraphRecord>,
    mut dev: Vec<ParagraphRecord>,
    holdout_ids: &[String],
) -> Result<(Vec<ParagraphRecord>, Vec<ParagraphRecord>)> {
    for id in holdout_ids {
        if dev.iter().any(|r| &r.par_id == id) {
            continue;
        }
        match train.iter().position(|r| &r.par_id == id) {
            Some(pos) => dev.push(train.remove(pos)),
            None => {
                return Err(Error::Invalid(format!(
                    "holdout id {id:?} not present in train or dev"
                )))
            }
        }
    }
    Ok((train, dev))
}
