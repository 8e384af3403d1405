//! Reference language models over integer token ids.
//!
//! Watermark generation and detection only need one thing from a model: the
//! next-token logits for a given prefix. [`LogitProvider`] captures that, and
//! two desk-scale implementations are provided: an add-k smoothed n-gram
//! model trained on a corpus ([`NGramModel`]) and a synthetic model that
//! emits distributions with exactly controlled entropy
//! ([`ControlledEntropyModel`]).

mod controlled;
mod ngram;
mod vocab;

pub use controlled::{ControlledEntropyModel, ScheduleEntry};
pub use ngram::NGramModel;
pub use vocab::{read_corpus, JoinRule, TokenizerKind, Vocabulary};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Prng;

/// Dense token identifier in `0..vocab_size`.
pub type TokenId = u32;

/// Where a token sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenOrigin {
    Prompt,
    Generated,
    Human,
}

/// A token id sequence tagged with its origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<TokenId>,
    pub origin: TokenOrigin,
}

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>, origin: TokenOrigin) -> Self {
        TokenSequence { tokens, origin }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Finite real-valued logits, one per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    /// Validates that every entry is finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("logit vector must be non-empty"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite logit {bad}")));
        }
        Ok(LogitVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for LogitVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A probability distribution over the vocabulary: non-negative entries
/// summing to 1 within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("probability vector must be non-empty"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::input(format!("invalid probability mass {bad}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::input(format!(
                "probability vector sums to {sum}, expected 1 within 1e-6"
            )));
        }
        Ok(ProbVector(values))
    }

    /// Wraps values already known to be a normalized distribution.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        ProbVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Numerically stable softmax; the result sums to 1 within 1e-9.
pub fn softmax(logits: &LogitVector) -> ProbVector {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    ProbVector::from_normalized(probs)
}

/// Draws one token by inverse-CDF walk: the first id whose cumulative mass
/// exceeds a uniform draw `u` in `[0, 1)`.
pub fn sample_token(probs: &ProbVector, rng: &mut Prng) -> TokenId {
    let u = rng.next_f64();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (id, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = id;
        }
        cum += p;
        if cum > u {
            return id as TokenId;
        }
    }
    // Accumulated roundoff left cum marginally below u; the mass above u
    // belongs to the last id carrying any probability.
    last_positive as TokenId
}

/// Anything that can produce next-token logits for a prefix.
pub trait LogitProvider {
    fn vocab_size(&self) -> usize;

    /// Logits for the distribution of the token following `prefix`.
    /// The prefix must be non-empty and contain only known token ids.
    fn next_logits(&self, prefix: &[TokenId]) -> Result<LogitVector>;

    /// Rough parameter count for efficiency reporting.
    fn param_count(&self) -> usize;
}

pub(crate) fn check_prefix(prefix: &[TokenId], vocab_size: usize) -> Result<()> {
    if prefix.is_empty() {
        return Err(Error::input("prefix must be non-empty"));
    }
    if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::input(format!(
            "token id {bad} out of range for vocabulary of size {vocab_size}"
        )));
    }
    Ok(())
}

/// On-disk model description: either a serialized model or a recipe that
/// trains an n-gram model from a corpus file when loaded.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelFile {
    Ngram(ngram::NGramModelRepr),
    Controlled {
        vocab_size: usize,
        schedule: Vec<ScheduleEntry>,
    },
    NgramSpec {
        corpus: String,
        order: usize,
        k: f64,
        tokenizer: TokenizerKind,
    },
}

/// A loaded reference model.
#[derive(Debug, Clone)]
pub enum Model {
    Ngram(NGramModel),
    Controlled(ControlledEntropyModel),
}

impl Model {
    /// Loads a model description from a JSON file. `ngram_spec` recipes
    /// resolve their corpus path relative to the model file's directory.
    pub fn load(path: &Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        match file {
            ModelFile::Ngram(repr) => Ok(Model::Ngram(NGramModel::try_from(repr)?)),
            ModelFile::Controlled { vocab_size, schedule } => Ok(Model::Controlled(
                ControlledEntropyModel::new(vocab_size, schedule)?,
            )),
            ModelFile::NgramSpec { corpus, order, k, tokenizer } => {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                let corpus_path = base.join(corpus);
                let docs = read_corpus(&corpus_path)?;
                let (vocab, sequences) = Vocabulary::build(tokenizer, &docs)?;
                let model = NGramModel::train(&sequences, order, k, vocab)?;
                Ok(Model::Ngram(model))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = match self {
            Model::Ngram(m) => ModelFile::Ngram(m.clone().into()),
            Model::Controlled(m) => ModelFile::Controlled {
                vocab_size: m.vocab_size(),
                schedule: m.schedule().to_vec(),
            },
        };
        let json = serde_json::to_string_pretty(&file)?;
        crate::cli::io::atomic_write(path, json.as_bytes())
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match self {
            Model::Ngram(m) => Some(m.vocabulary()),
            Model::Controlled(_) => None,
        }
    }
}

impl LogitProvider for Model {
    fn vocab_size(&self) -> usize {
        match self {
            Model::Ngram(m) => m.vocab_size(),
            Model::Controlled(m) => m.vocab_size(),
        }
    }

    fn next_logits(&self, prefix: &[TokenId]) -> Result<LogitVector> {
        match self {
            Model::Ngram(m) => m.next_logits(prefix),
            Model::Controlled(m) => m.next_logits(prefix),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Model::Ngram(m) => m.param_count(),
            Model::Controlled(m) => m.param_count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prob_vector_rejects_negative_mass() {
        let err = ProbVector::new(vec![0.5, 0.6, -0.1]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn prob_vector_rejects_bad_sum() {
        assert!(ProbVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn logit_vector_rejects_non_finite() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(LogitVector::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(LogitVector::new(vec![0.0, -3.5]).is_ok());
    }

    #[test]
    fn softmax_sums_to_one() {
        let logits = LogitVector::new(vec![1.0, -2.0, 0.5, 300.0, -300.0]).unwrap();
        let p = softmax(&logits);
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sampling_one_hot_returns_the_hot_id() {
        let p = ProbVector::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = Prng::seeded(11);
        for _ in 0..50 {
            assert_eq!(sample_token(&p, &mut rng), 2);
        }
    }

    #[test]
    fn sampling_is_reproducible_for_a_fixed_seed() {
        let p = ProbVector::new(vec![0.25; 4]).unwrap();
        let draw = |seed| {
            let mut rng = Prng::seeded(seed);
            (0..20).map(|_| sample_token(&p, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn sampling_uniform_frequencies_converge() {
        let p = ProbVector::new(vec![0.25; 4]).unwrap();
        let mut rng = Prng::seeded(2024);
        let mut counts = [0u32; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_token(&p, &mut rng) as usize] += 1;
        }
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() <= 0.01, "freq {freq} off 0.25");
        }
    }
}
