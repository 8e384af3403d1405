//! Add-k smoothed n-gram model with backoff.
//!
//! Conditionals use counts of the longest context seen in training:
//! `P(tok | ctx) = (count(ctx, tok) + k) / (count(ctx) + k * |V|)`.
//! A context never seen in training backs off to the next shorter order,
//! recursively down to the unigram table, which always exists after
//! training on a non-empty corpus.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_prefix, LogitProvider, LogitVector, TokenId, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    counts: HashMap<TokenId, u64>,
}

/// One table per context length m in `0..order`.
#[derive(Debug, Clone, Default)]
struct CountTable {
    map: HashMap<Vec<TokenId>, ContextCounts>,
}

#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    k: f64,
    vocab: Vocabulary,
    tables: Vec<CountTable>,
}

impl NGramModel {
    /// Trains count tables of every order up to `order` on the corpus.
    pub fn train(
        sequences: &[Vec<TokenId>],
        order: usize,
        k: f64,
        vocab: Vocabulary,
    ) -> Result<NGramModel> {
        if order < 1 {
            return Err(Error::config("n-gram order must be >= 1"));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::config(format!("add-k constant must be > 0, got {k}")));
        }
        if sequences.iter().all(|s| s.is_empty()) {
            return Err(Error::input("training corpus is empty"));
        }
        let vocab_size = vocab.size();
        let mut tables: Vec<CountTable> = (0..order).map(|_| CountTable::default()).collect();
        for seq in sequences {
            check_tokens(seq, vocab_size)?;
            for (i, &tok) in seq.iter().enumerate() {
                for m in 0..order.min(i + 1) {
                    let ctx = seq[i - m..i].to_vec();
                    let entry = tables[m].map.entry(ctx).or_default();
                    entry.total += 1;
                    *entry.counts.entry(tok).or_insert(0) += 1;
                }
            }
        }
        Ok(NGramModel { order, k, vocab, tables })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
}

fn check_tokens(seq: &[TokenId], vocab_size: usize) -> Result<()> {
    if let Some(&bad) = seq.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::input(format!(
            "token id {bad} out of range for vocabulary of size {vocab_size}"
        )));
    }
    Ok(())
}

impl LogitProvider for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.size()
    }

    fn next_logits(&self, prefix: &[TokenId]) -> Result<LogitVector> {
        check_prefix(prefix, self.vocab.size())?;
        let vocab_size = self.vocab.size();
        let max_ctx = (self.order - 1).min(prefix.len());
        // Longest seen context wins; back off toward the unigram table.
        for m in (0..=max_ctx).rev() {
            let ctx = &prefix[prefix.len() - m..];
            if let Some(entry) = self.tables[m].map.get(ctx) {
                let denom = entry.total as f64 + self.k * vocab_size as f64;
                let logits: Vec<f64> = (0..vocab_size as TokenId)
                    .map(|t| {
                        let c = entry.counts.get(&t).copied().unwrap_or(0);
                        ((c as f64 + self.k) / denom).ln()
                    })
                    .collect();
                return LogitVector::new(logits);
            }
        }
        Err(Error::input(
            "unigram table missing; model was not trained".to_string(),
        ))
    }

    fn param_count(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.map.values().map(|c| c.counts.len()).sum::<usize>())
            .sum()
    }
}

/// Serializable form: counts flattened to sorted triples so the JSON output
/// is byte-stable across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NGramModelRepr {
    order: usize,
    k: f64,
    vocab: Vocabulary,
    counts: Vec<CountEntryRepr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CountEntryRepr {
    context: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

impl From<NGramModel> for NGramModelRepr {
    fn from(model: NGramModel) -> Self {
        let mut entries = Vec::new();
        for table in &model.tables {
            for (ctx, cc) in &table.map {
                let mut counts: Vec<(TokenId, u64)> =
                    cc.counts.iter().map(|(&t, &c)| (t, c)).collect();
                counts.sort_unstable_by_key(|&(t, _)| t);
                entries.push(CountEntryRepr { context: ctx.clone(), counts });
            }
        }
        entries.sort_by(|a, b| {
            (a.context.len(), &a.context).cmp(&(b.context.len(), &b.context))
        });
        NGramModelRepr {
            order: model.order,
            k: model.k,
            vocab: model.vocab,
            counts: entries,
        }
    }
}

impl TryFrom<NGramModelRepr> for NGramModel {
    type Error = Error;

    fn try_from(repr: NGramModelRepr) -> Result<NGramModel> {
        if repr.order < 1 {
            return Err(Error::format("n-gram order must be >= 1".to_string()));
        }
        if !(repr.k > 0.0) || !repr.k.is_finite() {
            return Err(Error::format(format!("bad add-k constant {}", repr.k)));
        }
        let mut tables: Vec<CountTable> =
            (0..repr.order).map(|_| CountTable::default()).collect();
        for entry in repr.counts {
            let m = entry.context.len();
            if m >= repr.order {
                return Err(Error::format(format!(
                    "context of length {m} exceeds order {}",
                    repr.order
                )));
            }
            let cc = tables[m].map.entry(entry.context).or_default();
            for (tok, count) in entry.counts {
                cc.total += count;
                *cc.counts.entry(tok).or_insert(0) += count;
            }
        }
        if tables[0].map.is_empty() {
            return Err(Error::format("model has no unigram counts".to_string()));
        }
        Ok(NGramModel {
            order: repr.order,
            k: repr.k,
            vocab: repr.vocab,
            tables,
        })
    }
}
