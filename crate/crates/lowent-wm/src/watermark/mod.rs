//! Green/red-list watermarking primitives.
//!
//! A keyed hash of the previous token seeds a pseudo-random partition of the
//! vocabulary into a green list (fraction gamma) and its red complement.
//! During generation the green logits are shifted up by delta before the
//! softmax; during detection the green-token count of a suspect text is
//! standardized into a z-statistic.

mod generate;
mod partition;

pub use generate::{generate, EntropyGate, GenerationTrace, TraceStep};
pub use partition::{green_list_size, partition_vocab, GreenRedPartition, PartitionTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LogitVector, ProbVector};

/// Watermarking scheme selecting which generation steps are biased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Bias every step.
    Kgw,
    /// Bias only steps whose true next-token entropy exceeds `tau_gen`.
    Sweet,
    /// Bias only steps a trained entropy tagger predicts as high-entropy.
    Ie,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "kgw" => Ok(Scheme::Kgw),
            "sweet" => Ok(Scheme::Sweet),
            "ie" => Ok(Scheme::Ie),
            other => Err(Error::config(format!(
                "unknown scheme {other:?} (expected kgw, sweet or ie)"
            ))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Kgw => "kgw",
            Scheme::Sweet => "sweet",
            Scheme::Ie => "ie",
        })
    }
}

/// Shared parameters for watermark generation and detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatermarkConfig {
    /// Green-list fraction, strictly between 0 and 1.
    pub gamma: f64,
    /// Logit bias added to green tokens, >= 0.
    pub delta: f64,
    /// Secret key seeding the vocabulary partition.
    pub key: u64,
    /// Detection verdict threshold on the z-statistic.
    pub z_threshold: f64,
    /// Which generation steps get biased.
    pub scheme: Scheme,
    /// Entropy gate threshold (nats) used by the sweet and ie schemes.
    pub tau_gen: f64,
}

impl Default for WatermarkConfig {
    fn default() -> Self {
        WatermarkConfig {
            gamma: 0.5,
            delta: 3.0,
            key: 42,
            z_threshold: 4.0,
            scheme: Scheme::Kgw,
            tau_gen: 0.6,
        }
    }
}

impl WatermarkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!(
                "gamma must be in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::config(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if self.z_threshold.is_nan() {
            return Err(Error::config("z_threshold must not be NaN"));
        }
        if !self.tau_gen.is_finite() {
            return Err(Error::config(format!(
                "tau_gen must be finite, got {}",
                self.tau_gen
            )));
        }
        Ok(())
    }
}

/// Shannon entropy of a distribution in nats; `0 * ln 0` counts as 0.
/// The result is clamped into `[0, ln(len)]` against roundoff.
pub fn shannon_entropy(probs: &ProbVector) -> f64 {
    let mut h = 0.0;
    for &p in probs.iter() {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h.max(0.0).min((probs.len() as f64).ln())
}

/// Biased softmax: green logits are shifted up by `delta`, then all logits
/// share one normalizer. With `delta = 0` this is exactly the plain softmax.
pub fn apply_green_bias(
    logits: &LogitVector,
    partition: &GreenRedPartition,
    delta: f64,
) -> Result<ProbVector> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::input(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    if logits.len() != partition.vocab_size() {
        return Err(Error::input(format!(
            "logit count {} does not match partition vocabulary {}",
            logits.len(),
            partition.vocab_size()
        )));
    }
    let mut shifted: Vec<f64> = Vec::with_capacity(logits.len());
    for (id, &l) in logits.iter().enumerate() {
        let bias = if partition.is_green(id as u32) { delta } else { 0.0 };
        shifted.push(l + bias);
    }
    let max = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = shifted.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    Ok(ProbVector::from_normalized(probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::softmax;

    #[test]
    fn entropy_of_one_hot_is_zero() {
        let p = ProbVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(shannon_entropy(&p), 0.0);
    }

    #[test]
    fn entropy_of_uniform_is_ln_n() {
        let p = ProbVector::new(vec![0.25; 4]).unwrap();
        assert!((shannon_entropy(&p) - 4.0_f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn entropy_matches_hand_value() {
        let p = ProbVector::new(vec![0.9, 0.05, 0.05]).unwrap();
        let expected = -(0.9 * 0.9_f64.ln() + 2.0 * 0.05 * 0.05_f64.ln());
        assert!((shannon_entropy(&p) - expected).abs() <= 1e-4);
        assert!((shannon_entropy(&p) - 0.3944).abs() <= 1e-4);
    }

    #[test]
    fn zero_delta_bias_equals_softmax() {
        let logits = LogitVector::new(vec![0.3, -1.2, 2.0, 0.0, -0.5]).unwrap();
        let partition = partition_vocab(2, 9, 0.5, 5).unwrap();
        let biased = apply_green_bias(&logits, &partition, 0.0).unwrap();
        let plain = softmax(&logits);
        for (a, b) in biased.iter().zip(plain.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_token_bias_matches_hand_value() {
        // Equal logits, green = {0}, delta = ln 3 => p = (3/4, 1/4).
        let logits = LogitVector::new(vec![0.7, 0.7]).unwrap();
        let partition = GreenRedPartition::from_green_ids(&[0], 2).unwrap();
        let p = apply_green_bias(&logits, &partition, 3.0_f64.ln()).unwrap();
        assert!((p[0] - 0.75).abs() <= 1e-12);
        assert!((p[1] - 0.25).abs() <= 1e-12);
    }

    #[test]
    fn biased_distribution_sums_to_one() {
        let logits = LogitVector::new(vec![5.0, -3.0, 0.1, 2.2, -7.0, 1.0]).unwrap();
        let partition = partition_vocab(1, 7, 0.5, 6).unwrap();
        for delta in [0.0, 0.5, 3.0, 10.0] {
            let p = apply_green_bias(&logits, &partition, delta).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn bias_rejects_mismatched_sizes_and_negative_delta() {
        let logits = LogitVector::new(vec![0.0; 4]).unwrap();
        let partition = partition_vocab(0, 1, 0.5, 6).unwrap();
        assert!(apply_green_bias(&logits, &partition, 1.0).is_err());
        let partition4 = partition_vocab(0, 1, 0.5, 4).unwrap();
        assert!(apply_green_bias(&logits, &partition4, -1.0).is_err());
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let mut cfg = WatermarkConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.5;
        cfg.delta = -0.1;
        assert!(cfg.validate().is_err());
        cfg.delta = 3.0;
        cfg.z_threshold = f64::NAN;
        assert!(cfg.validate().is_err());
    }
}
