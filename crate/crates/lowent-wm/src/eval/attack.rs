//! Token-substitution attack for robustness measurements.
//!
//! Replaces a fraction of positions with alternative tokens, either
//! uniformly at random or drawn from a reference model's conditional
//! distribution at that position, and preserves sequence length so the
//! attacked text can be re-detected directly.

use crate::error::{Error, Result};
use crate::model::{sample_token, softmax, LogitProvider, ProbVector, TokenId};
use crate::rng::Prng;

/// How replacement tokens are drawn.
pub enum AttackSampler<'a> {
    /// Uniform over the vocabulary excluding the original token.
    Uniform,
    /// From the reference model's conditional distribution given the
    /// (already attacked) prefix, with the original token's mass removed.
    /// Position 0 has no prefix to condition on and falls back to uniform.
    Model(&'a dyn LogitProvider),
}

/// Replaces `floor(level * len)` distinct, uniformly chosen positions.
/// Level 0 returns the input unchanged.
pub fn substitution_attack(
    tokens: &[TokenId],
    level: f64,
    vocab_size: usize,
    sampler: &AttackSampler,
    rng: &mut Prng,
) -> Result<Vec<TokenId>> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::input(format!("attack level must be in [0, 1], got {level}")));
    }
    if vocab_size < 2 {
        return Err(Error::config(format!(
            "substitution needs a vocabulary of at least 2 tokens, got {vocab_size}"
        )));
    }
    if let Some(bad) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::input(format!(
            "token id {bad} is outside the vocabulary of size {vocab_size}"
        )));
    }
    if let AttackSampler::Model(model) = sampler {
        if model.vocab_size() != vocab_size {
            return Err(Error::config(format!(
                "replacement model covers {} tokens but the text assumes {vocab_size}",
                model.vocab_size()
            )));
        }
    }

    let mut attacked = tokens.to_vec();
    let count = (level * tokens.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(attacked);
    }
    let mut positions = rng.choose_indices(tokens.len(), count);
    positions.sort_unstable();

    for &i in &positions {
        let original = attacked[i];
        let replacement = match sampler {
            AttackSampler::Uniform => uniform_excluding(original, vocab_size, rng),
            AttackSampler::Model(model) => {
                if i == 0 {
                    uniform_excluding(original, vocab_size, rng)
                } else {
                    match conditional_excluding(*model, &attacked[..i], original)? {
                        Some(dist) => sample_token(&dist, rng),
                        // The model puts everything on the original token;
                        // there is no plausible substitute, keep it.
                        None => original,
                    }
                }
            }
        };
        attacked[i] = replacement;
    }
    Ok(attacked)
}

fn uniform_excluding(original: TokenId, vocab_size: usize, rng: &mut Prng) -> TokenId {
    let r = rng.next_below(vocab_size as u64 - 1) as TokenId;
    if r >= original {
        r + 1
    } else {
        r
    }
}

/// The model's next-token distribution with the original token's mass
/// zeroed and the rest renormalized. `None` when no mass remains.
fn conditional_excluding(
    model: &dyn LogitProvider,
    prefix: &[TokenId],
    original: TokenId,
) -> Result<Option<ProbVector>> {
    let probs = softmax(&model.next_logits(prefix)?);
    let mut values = probs.to_vec();
    values[original as usize] = 0.0;
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Ok(None);
    }
    for v in values.iter_mut() {
        *v /= total;
    }
    Ok(Some(ProbVector::from_normalized(values)))
}
