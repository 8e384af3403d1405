//! Keyed green/red vocabulary partition.
//!
//! The partition for a step is fully determined by `(prev_token, key,
//! gamma, vocab_size)`: a splitmix64 mix of the key and previous token
//! seeds a counter-based generator, that generator drives a Fisher-Yates
//! shuffle of `0..vocab_size`, and the first `floor(gamma * vocab_size)`
//! positions of the shuffle form the green list. Every implementation step
//! is pinned so independently written detectors agree bit-exactly.

use crate::error::{Error, Result};
use crate::model::TokenId;
use crate::rng::{mix64, Prng, GOLDEN_GAMMA};

/// Green-list size `floor(gamma * vocab_size)`. Degenerate sizes (empty
/// green or empty red list) are configuration errors.
pub fn green_list_size(gamma: f64, vocab_size: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("gamma must be in (0, 1), got {gamma}")));
    }
    if vocab_size < 2 {
        return Err(Error::config(format!(
            "vocab_size must be >= 2, got {vocab_size}"
        )));
    }
    let size = (gamma * vocab_size as f64).floor() as usize;
    if size < 1 || size > vocab_size - 1 {
        return Err(Error::config(format!(
            "green list size {size} outside [1, {}] for gamma={gamma}, vocab_size={vocab_size}",
            vocab_size - 1
        )));
    }
    Ok(size)
}

/// A partition of the vocabulary into green ids and their red complement,
/// stored as a bitmask for O(1) membership tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreenRedPartition {
    vocab_size: usize,
    green_size: usize,
    mask: Vec<u64>,
}

impl GreenRedPartition {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn green_size(&self) -> usize {
        self.green_size
    }

    pub fn red_size(&self) -> usize {
        self.vocab_size - self.green_size
    }

    pub fn is_green(&self, token: TokenId) -> bool {
        let t = token as usize;
        t < self.vocab_size && (self.mask[t / 64] >> (t % 64)) & 1 == 1
    }

    /// Green ids in ascending order.
    pub fn green_ids(&self) -> Vec<TokenId> {
        (0..self.vocab_size as TokenId)
            .filter(|&t| self.is_green(t))
            .collect()
    }

    /// Red ids in ascending order.
    pub fn red_ids(&self) -> Vec<TokenId> {
        (0..self.vocab_size as TokenId)
            .filter(|&t| !self.is_green(t))
            .collect()
    }

    /// Builds a partition from an explicit green set (test fixtures).
    pub fn from_green_ids(green: &[TokenId], vocab_size: usize) -> Result<Self> {
        let mut mask = vec![0u64; vocab_size.div_ceil(64)];
        let mut green_size = 0;
        for &t in green {
            let i = t as usize;
            if i >= vocab_size {
                return Err(Error::input(format!(
                    "green id {t} out of range for vocab_size {vocab_size}"
                )));
            }
            if (mask[i / 64] >> (i % 64)) & 1 == 0 {
                mask[i / 64] |= 1 << (i % 64);
                green_size += 1;
            }
        }
        if green_size == 0 || green_size >= vocab_size {
            return Err(Error::input(
                "green set must be a proper non-empty subset".to_string(),
            ));
        }
        Ok(GreenRedPartition { vocab_size, green_size, mask })
    }
}

/// Deterministic keyed partition for one generation/detection step.
pub fn partition_vocab(
    prev_token: TokenId,
    key: u64,
    gamma: f64,
    vocab_size: usize,
) -> Result<GreenRedPartition> {
    let green_size = green_list_size(gamma, vocab_size)?;
    let seed = mix64(key ^ (prev_token as u64 + 1).wrapping_mul(GOLDEN_GAMMA));
    let mut rng = Prng::seeded(seed);
    let mut ids: Vec<u32> = (0..vocab_size as u32).collect();
    rng.shuffle(&mut ids);
    let mut mask = vec![0u64; vocab_size.div_ceil(64)];
    for &t in &ids[..green_size] {
        mask[t as usize / 64] |= 1 << (t as usize % 64);
    }
    Ok(GreenRedPartition { vocab_size, green_size, mask })
}

/// All partitions for one `(key, gamma, vocab_size)` triple, indexed by the
/// previous token. Batch detection over many documents reuses this instead
/// of reshuffling per position; rows are built by `partition_vocab` itself,
/// so membership answers are identical by construction.
pub struct PartitionTable {
    vocab_size: usize,
    words_per_row: usize,
    bits: Vec<u64>,
}

impl PartitionTable {
    pub fn build(key: u64, gamma: f64, vocab_size: usize) -> Result<Self> {
        green_list_size(gamma, vocab_size)?;
        let words_per_row = vocab_size.div_ceil(64);
        let mut bits = vec![0u64; words_per_row * vocab_size];
        for prev in 0..vocab_size {
            let partition = partition_vocab(prev as TokenId, key, gamma, vocab_size)?;
            let row = &mut bits[prev * words_per_row..(prev + 1) * words_per_row];
            row.copy_from_slice(&partition.mask);
        }
        Ok(PartitionTable { vocab_size, words_per_row, bits })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_green(&self, prev: TokenId, token: TokenId) -> bool {
        let (p, t) = (prev as usize, token as usize);
        debug_assert!(p < self.vocab_size && t < self.vocab_size);
        (self.bits[p * self.words_per_row + t / 64] >> (t % 64)) & 1 == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_size_is_floor_of_gamma_v() {
        let p = partition_vocab(0, 1, 0.25, 8).unwrap();
        assert_eq!(p.green_size(), 2);
        assert_eq!(p.red_size(), 6);
        assert_eq!(p.green_ids().len(), 2);
        assert_eq!(p.red_ids().len(), 6);
    }

    #[test]
    fn degenerate_green_sizes_are_config_errors() {
        // floor(0.1 * 4) = 0.
        assert!(partition_vocab(0, 1, 0.1, 4).is_err());
        assert!(green_list_size(0.5, 1).is_err());
        assert!(green_list_size(-0.5, 8).is_err());
        assert!(green_list_size(1.0, 8).is_err());
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let p = partition_vocab(17, 123, 0.5, 33).unwrap();
        let green = p.green_ids();
        let red = p.red_ids();
        assert_eq!(green.len() + red.len(), 33);
        let mut all: Vec<u32> = green.iter().chain(red.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..33).collect::<Vec<u32>>());
    }

    #[test]
    fn same_inputs_give_identical_partitions() {
        let a = partition_vocab(5, 99, 0.5, 100).unwrap();
        let b = partition_vocab(5, 99, 0.5, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_keys_give_different_green_sets() {
        let a = partition_vocab(7, 1, 0.5, 1000).unwrap();
        let b = partition_vocab(7, 2, 0.5, 1000).unwrap();
        assert_eq!(a.green_size(), 500);
        assert_eq!(b.green_size(), 500);
        assert_ne!(a.green_ids(), b.green_ids());
    }

    #[test]
    fn different_prev_tokens_give_different_green_sets() {
        let a = partition_vocab(0, 42, 0.5, 1000).unwrap();
        let b = partition_vocab(1, 42, 0.5, 1000).unwrap();
        assert_ne!(a.green_ids(), b.green_ids());
    }

    #[test]
    fn partition_pipeline_regression_pin() {
        // Frozen outputs of the seeded mix -> counter generator ->
        // Fisher-Yates pipeline; any change to the hashing or shuffle
        // order breaks replay compatibility and must fail here.
        let p = partition_vocab(7, 1, 0.5, 16).unwrap();
        assert_eq!(p.green_ids(), frozen_green_7_1_16());
    }

    fn frozen_green_7_1_16() -> Vec<u32> {
        // Recorded from the first implementation run; see the pipeline
        // description in the module docs.
        vec![0, 4, 5, 6, 8, 9, 10, 13]
    }

    #[test]
    fn table_matches_direct_partitions() {
        let table = PartitionTable::build(77, 0.25, 40).unwrap();
        for prev in 0..40u32 {
            let p = partition_vocab(prev, 77, 0.25, 40).unwrap();
            for tok in 0..40u32 {
                assert_eq!(table.is_green(prev, tok), p.is_green(tok));
            }
        }
    }
}
