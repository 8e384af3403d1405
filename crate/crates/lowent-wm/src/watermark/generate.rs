//! Watermarked autoregressive generation.
//!
//! Every step computes the model's next-token distribution, its Shannon
//! entropy, and the keyed green/red partition seeded by the previous token
//! (the first generated token hashes the last prompt token). An entropy
//! gate decides whether the step is biased: `kgw` always biases, `sweet`
//! biases only above a true-entropy threshold, and `ie` biases where a
//! trained tagger predicts high entropy. The trace records per-step
//! entropy, gating and green membership for downstream analysis.

use serde::{Deserialize, Serialize};

use super::{apply_green_bias, partition_vocab, shannon_entropy, WatermarkConfig};
use crate::error::{Error, Result};
use crate::model::{sample_token, softmax, LogitProvider, TokenId, TokenOrigin, TokenSequence};
use crate::rng::Prng;
use crate::tagger::{predict_low, TaggerBank};

/// Decides which generation steps receive the green bias.
pub enum EntropyGate<'a> {
    /// Bias every step (kgw).
    Always,
    /// Bias steps whose true next-token entropy exceeds `tau` (sweet).
    TrueEntropy { tau: f64 },
    /// Bias steps the tagger head at `tau` predicts as high-entropy (ie).
    Tagger { bank: &'a TaggerBank, tau: f64 },
}

impl EntropyGate<'_> {
    /// Builds the gate matching `cfg.scheme`. The ie scheme needs a tagger
    /// bank holding a head for `cfg.tau_gen`.
    pub fn for_config<'a>(
        cfg: &WatermarkConfig,
        bank: Option<&'a TaggerBank>,
    ) -> Result<EntropyGate<'a>> {
        match cfg.scheme {
            super::Scheme::Kgw => Ok(EntropyGate::Always),
            super::Scheme::Sweet => Ok(EntropyGate::TrueEntropy { tau: cfg.tau_gen }),
            super::Scheme::Ie => {
                let bank = bank.ok_or_else(|| {
                    Error::config("scheme ie requires a tagger bank".to_string())
                })?;
                Ok(EntropyGate::Tagger { bank, tau: cfg.tau_gen })
            }
        }
    }

    fn admits(&self, entropy: f64, prefix: &[TokenId]) -> Result<bool> {
        match self {
            EntropyGate::Always => Ok(true),
            EntropyGate::TrueEntropy { tau } => Ok(entropy > *tau),
            EntropyGate::Tagger { bank, tau } => {
                let (low, _) = predict_low(bank, prefix, *tau)?;
                Ok(!low)
            }
        }
    }
}

/// One generation step in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub token: TokenId,
    /// Shannon entropy (nats) of the unbiased next-token distribution.
    pub entropy: f64,
    /// Whether the step passed the gate and was biased.
    pub watermarked: bool,
    /// Whether the emitted token fell in the step's green list.
    pub green: bool,
}

/// Per-step records for one generated sequence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub steps: Vec<TraceStep>,
}

impl GenerationTrace {
    pub fn green_count(&self) -> u64 {
        self.steps.iter().filter(|s| s.green).count() as u64
    }

    pub fn watermarked_count(&self) -> u64 {
        self.steps.iter().filter(|s| s.watermarked).count() as u64
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Generates `max_tokens` tokens after `prompt`, biasing the steps admitted
/// by `gate`. Returns the generated continuation and its trace.
pub fn generate(
    model: &dyn LogitProvider,
    prompt: &[TokenId],
    cfg: &WatermarkConfig,
    gate: &EntropyGate<'_>,
    max_tokens: usize,
    rng: &mut Prng,
) -> Result<(TokenSequence, GenerationTrace)> {
    cfg.validate()?;
    if prompt.is_empty() {
        return Err(Error::input("prompt must be non-empty"));
    }
    if max_tokens == 0 {
        return Err(Error::input("max_tokens must be >= 1"));
    }
    let vocab_size = model.vocab_size();
    let mut prefix: Vec<TokenId> = prompt.to_vec();
    let mut trace = GenerationTrace::default();
    let mut generated = Vec::with_capacity(max_tokens);

    for _ in 0..max_tokens {
        let logits = model.next_logits(&prefix)?;
        let probs = softmax(&logits);
        let entropy = shannon_entropy(&probs);
        let admitted = gate.admits(entropy, &prefix)?;
        let prev = *prefix.last().expect("prefix stays non-empty");
        let partition = partition_vocab(prev, cfg.key, cfg.gamma, vocab_size)?;
        let token = if admitted {
            let biased = apply_green_bias(&logits, &partition, cfg.delta)?;
            sample_token(&biased, rng)
        } else {
            sample_token(&probs, rng)
        };
        trace.steps.push(TraceStep {
            token,
            entropy,
            watermarked: admitted,
            green: partition.is_green(token),
        });
        generated.push(token);
        prefix.push(token);
    }

    Ok((TokenSequence::new(generated, TokenOrigin::Generated), trace))
}
