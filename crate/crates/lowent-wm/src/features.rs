//! Prefix feature extraction for the entropy tagger.
//!
//! The tagger needs a fixed-dimension real vector summarizing a token
//! prefix. The built-in variant hashes the n-grams (n = 1, 2, 3) anchored
//! at the prefix's final position into `dimension` signed buckets and
//! L2-normalizes; since next-token uncertainty is driven by the most recent
//! context, these anchored n-grams are the informative part of the prefix.
//! Prefixes are truncated to their last `max_prefix_len` tokens first, so
//! anything before that horizon cannot influence the vector.
//!
//! For parity with setups that embed prefixes with a frozen external
//! encoder, precomputed per-position vectors can be loaded from a plain
//! text file (`dim=<d>` header, one whitespace-separated float row per
//! dataset position).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TokenId, Vocabulary};
use crate::rng::{mix64, GOLDEN_GAMMA};

/// Feature vector over `dimension` real buckets.
pub type FeatureVector = Vec<f64>;

/// Which feature source a tagger was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorVariant {
    /// Signed hashed n-grams computed from the prefix itself.
    HashedNgram,
    /// Rows of a precomputed embedding file, aligned 1:1 with dataset
    /// positions; nothing can be recomputed from raw prefixes.
    ExternalFile,
}

/// Feature extraction settings, recorded inside every tagger bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub dimension: usize,
    pub max_prefix_len: usize,
    pub variant: ExtractorVariant,
    pub hash_seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            dimension: 256,
            max_prefix_len: 128,
            variant: ExtractorVariant::HashedNgram,
            hash_seed: 0x5EED_0001,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::config("feature dimension must be >= 1"));
        }
        if self.max_prefix_len == 0 {
            return Err(Error::config("max_prefix_len must be >= 1"));
        }
        Ok(())
    }
}

fn hash_ngram(seed: u64, ngram: &[TokenId]) -> u64 {
    let mut h = mix64(seed ^ (ngram.len() as u64).wrapping_mul(GOLDEN_GAMMA));
    for &t in ngram {
        h = mix64(h ^ (t as u64 + 1));
    }
    h
}

/// Extracts the hashed-ngram feature vector of a prefix. The prefix is
/// truncated to its last `max_prefix_len` tokens; each n-gram (n = 1, 2, 3)
/// ending at the final position adds +/-1 to one bucket; the vector is then
/// L2-normalized (zero vectors stay zero).
pub fn extract(prefix: &[TokenId], cfg: &ExtractorConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    if prefix.is_empty() {
        return Err(Error::input("cannot extract features of an empty prefix"));
    }
    if cfg.variant == ExtractorVariant::ExternalFile {
        return Err(Error::input(
            "external-file features are read from an embedding table, not computed".to_string(),
        ));
    }
    let window = &prefix[prefix.len().saturating_sub(cfg.max_prefix_len)..];
    let mut v = vec![0.0; cfg.dimension];
    for n in 1..=3.min(window.len()) {
        let ngram = &window[window.len() - n..];
        let h = hash_ngram(cfg.hash_seed, ngram);
        let bucket = ((h >> 1) % cfg.dimension as u64) as usize;
        let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(v)
}

/// Renders token ids as text via the vocabulary's join rule.
pub fn translate_tokens(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<String> {
    vocab.translate(tokens)
}

/// Precomputed per-position feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("embedding dimension must be >= 1"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::format(format!(
                    "row {i} has {} values, expected {dim}",
                    row.len()
                )));
            }
        }
        Ok(EmbeddingTable { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> Result<&[f64]> {
        self.rows
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::input(format!("embedding row {i} out of range ({} rows)", self.rows.len())))
    }

    /// Parses the `dim=<d>` header plus one float row per line.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        let mut lines = raw.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(format!("{}: empty embedding file", path.display())))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| {
                Error::format(format!(
                    "{}: expected header dim=<d>, got {header:?}",
                    path.display()
                ))
            })?;
        if dim == 0 {
            return Err(Error::format(format!("{}: dim must be >= 1", path.display())));
        }
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| {
                        Error::format(format!("{}:{}: {e}", path.display(), lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(Error::format(format!(
                    "{}:{}: row has {} values, expected {dim}",
                    path.display(),
                    lineno + 1,
                    row.len()
                )));
            }
            rows.push(row);
        }
        Ok(EmbeddingTable { dim, rows })
    }

    /// Writes the table in the same format `load` reads. Values use Rust's
    /// shortest round-trip float formatting, so load(save(t)) == t exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("dim={}\n", self.dim);
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                out.push_str(&format!("{v}"));
                first = false;
            }
            out.push('\n');
        }
        crate::cli::io::atomic_write(path, out.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize) -> ExtractorConfig {
        ExtractorConfig { dimension: dim, ..ExtractorConfig::default() }
    }

    #[test]
    fn extraction_is_deterministic() {
        let prefix = [5, 2, 9, 1, 1, 3];
        let a = extract(&prefix, &cfg(64)).unwrap();
        let b = extract(&prefix, &cfg(64)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vector_is_unit_norm_when_nonzero() {
        let v = extract(&[1, 2, 3, 4], &cfg(32)).unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn only_the_truncation_window_matters() {
        let cfg = ExtractorConfig { max_prefix_len: 4, ..cfg(64) };
        let a = extract(&[9, 9, 9, 1, 2, 3, 4], &cfg).unwrap();
        let b = extract(&[7, 7, 7, 1, 2, 3, 4], &cfg).unwrap();
        assert_eq!(a, b);
        // ... but changes inside the window show up.
        let c = extract(&[9, 9, 9, 1, 2, 3, 5], &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn changing_the_hash_seed_changes_the_vector() {
        let prefix = [4, 8, 15, 16, 23, 42];
        let a = extract(&prefix, &ExtractorConfig { hash_seed: 1, ..cfg(64) }).unwrap();
        let b = extract(&prefix, &ExtractorConfig { hash_seed: 2, ..cfg(64) }).unwrap();
        assert_ne!(a, b);
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((na - 1.0).abs() <= 1e-12);
        assert!((nb - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_prefix_is_an_input_error() {
        assert!(extract(&[], &cfg(16)).is_err());
    }

    #[test]
    fn embedding_file_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let table = EmbeddingTable::new(
            4,
            vec![
                vec![0.25, -1.5, 3.0000000001, 0.0],
                vec![1e-9, 2.5, -0.125, 7.75],
                vec![0.1, 0.2, 0.3, 0.4],
            ],
        )
        .unwrap();
        table.save(&path).unwrap();
        let back = EmbeddingTable::load(&path).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn ragged_embedding_rows_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "dim=3\n1 2 3\n4 5\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn missing_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nohdr.txt");
        std::fs::write(&path, "1 2 3\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn small_embedding_fixture_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "dim=4\n1 2 3 4\n5 6 7 8\n9 10 11 12\n").unwrap();
        let t = EmbeddingTable::load(&path).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.row(1).unwrap(), &[5.0, 6.0, 7.0, 8.0]);
        assert!(t.row(3).is_err());
    }
}
