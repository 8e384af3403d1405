//! Type-I error calibration by Monte Carlo over key-independent text.
//!
//! Uniform random token sequences carry no watermark regardless of the
//! key, so the fraction of them whose z clears the decision threshold is
//! the false-positive rate the threshold buys. One partition table serves
//! every trial, keeping the run comfortably fast at 100k documents.

use serde::{Deserialize, Serialize};

use crate::detect::detect_full_with_table;
use crate::error::{Error, Result};
use crate::model::TokenId;
use crate::rng::Prng;
use crate::watermark::PartitionTable;
use crate::watermark::WatermarkConfig;

pub const DEFAULT_CALIBRATION_VOCAB: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub trials: u64,
    pub length: usize,
    pub gamma: f64,
    pub z_threshold: f64,
    pub fpr: f64,
    pub mean_z: f64,
    pub var_z: f64,
    pub vocab_size: usize,
}

/// Runs `trials` null documents of `length` uniform tokens through full
/// detection and reports the empirical false-positive rate at the
/// config's threshold, plus the first two moments of z.
pub fn type1_calibration(
    trials: u64,
    length: usize,
    cfg: &WatermarkConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    cfg.validate()?;
    if trials < 1000 {
        return Err(Error::config(format!(
            "calibration needs at least 1000 trials for a stable estimate, got {trials}"
        )));
    }
    if length < 2 {
        return Err(Error::config("calibration documents need at least 2 tokens"));
    }
    let table = PartitionTable::build(cfg.key, cfg.gamma, vocab_size)?;
    let mut rng = Prng::stream(seed, "calibration");
    let mut tokens: Vec<TokenId> = vec![0; length];
    let mut hits = 0u64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..trials {
        for t in tokens.iter_mut() {
            *t = rng.next_below(vocab_size as u64) as TokenId;
        }
        let z = detect_full_with_table(&tokens, cfg, &table, None)?.z;
        if z > cfg.z_threshold {
            hits += 1;
        }
        sum += z;
        sum_sq += z * z;
    }
    let mean_z = sum / trials as f64;
    let var_z = sum_sq / trials as f64 - mean_z * mean_z;
    Ok(CalibrationReport {
        trials,
        length,
        gamma: cfg.gamma,
        z_threshold: cfg.z_threshold,
        fpr: hits as f64 / trials as f64,
        mean_z,
        var_z,
        vocab_size,
    })
}
