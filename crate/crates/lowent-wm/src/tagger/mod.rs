//! Entropy tagger: small trained heads that flag low-entropy positions.
//!
//! Detection without the generating model needs a stand-in for next-token
//! entropy. A tagger bank holds one binary head per threshold on a tau
//! grid; each head answers "is the entropy at this prefix below my tau?".
//! The bank records its feature extractor so prediction and training can
//! never disagree about preprocessing.

pub mod mlp;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract, EmbeddingTable, ExtractorConfig, ExtractorVariant, FeatureVector};
use crate::model::{softmax, LogitProvider, TokenId};
use crate::rng::mix64;
use crate::watermark::shannon_entropy;

use mlp::{MlpHead, MlpHeadRepr};
use train::{train_head, TrainConfig};

/// One training row: prefix features plus the true next-token entropy.
#[derive(Debug, Clone)]
pub struct TaggerSample {
    pub features: FeatureVector,
    pub entropy: f64,
}

/// Builds training rows from token sequences by querying `model` for the
/// entropy at every split point. A sequence of length `L` yields `L - 1`
/// rows (prefixes `s[..1]` through `s[..L-1]`), in sequence-then-position
/// order.
pub fn collect_samples(
    model: &dyn LogitProvider,
    sequences: &[Vec<TokenId>],
    extractor: &ExtractorConfig,
) -> Result<Vec<TaggerSample>> {
    extractor.validate()?;
    if extractor.variant == ExtractorVariant::ExternalFile {
        return Err(Error::input(
            "external-file features must be supplied via collect_samples_external".to_string(),
        ));
    }
    let mut samples = Vec::new();
    for seq in sequences {
        for k in 1..seq.len() {
            let prefix = &seq[..k];
            let logits = model.next_logits(prefix)?;
            let entropy = shannon_entropy(&softmax(&logits));
            samples.push(TaggerSample { features: extract(prefix, extractor)?, entropy });
        }
    }
    if samples.is_empty() {
        return Err(Error::input(
            "no training rows: every sequence has fewer than 2 tokens".to_string(),
        ));
    }
    Ok(samples)
}

/// As [`collect_samples`], but features come from rows of a precomputed
/// embedding table instead of hashed n-grams. Row `i` of the table must
/// correspond to the `i`-th split point in sequence-then-position order.
pub fn collect_samples_external(
    model: &dyn LogitProvider,
    sequences: &[Vec<TokenId>],
    table: &EmbeddingTable,
) -> Result<Vec<TaggerSample>> {
    let mut samples = Vec::new();
    let mut row = 0usize;
    for seq in sequences {
        for k in 1..seq.len() {
            let prefix = &seq[..k];
            let logits = model.next_logits(prefix)?;
            let entropy = shannon_entropy(&softmax(&logits));
            let features = table
                .row(row)
                .map_err(|_| {
                    Error::input(format!(
                        "embedding table has {} rows but the corpus has more split points",
                        table.len()
                    ))
                })?
                .to_vec();
            samples.push(TaggerSample { features, entropy });
            row += 1;
        }
    }
    if samples.is_empty() {
        return Err(Error::input(
            "no training rows: every sequence has fewer than 2 tokens".to_string(),
        ));
    }
    if row != table.len() {
        return Err(Error::input(format!(
            "embedding table has {} rows but the corpus has {row} split points",
            table.len()
        )));
    }
    Ok(samples)
}

/// Provenance recorded alongside each trained head.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HeadMetadata {
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct BankHead {
    pub tau: f64,
    pub head: MlpHead,
    pub metadata: HeadMetadata,
}

/// A set of entropy heads sharing one feature extractor, keyed by tau.
#[derive(Debug, Clone)]
pub struct TaggerBank {
    pub extractor: ExtractorConfig,
    pub decision_threshold: f64,
    pub heads: Vec<BankHead>,
}

#[derive(Serialize, Deserialize)]
struct BankHeadRepr {
    tau: f64,
    #[serde(flatten)]
    head: MlpHeadRepr,
    metadata: HeadMetadata,
}

#[derive(Serialize, Deserialize)]
struct BankRepr {
    extractor: ExtractorConfig,
    decision_threshold: f64,
    heads: Vec<BankHeadRepr>,
}

impl TaggerBank {
    /// Trains one head per tau in `grid`. Head `i` trains from seed
    /// `mix64(cfg.seed ^ i)` so heads differ but the whole bank replays
    /// from one seed.
    pub fn train(
        samples: &[TaggerSample],
        grid: &[f64],
        extractor: ExtractorConfig,
        cfg: &TrainConfig,
    ) -> Result<TaggerBank> {
        extractor.validate()?;
        if grid.is_empty() {
            return Err(Error::config("tau grid must be non-empty".to_string()));
        }
        let mut heads = Vec::with_capacity(grid.len());
        for (i, &tau) in grid.iter().enumerate() {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::config(format!("tau grid entries must be > 0, got {tau}")));
            }
            let head_cfg = TrainConfig { seed: mix64(cfg.seed ^ i as u64), ..cfg.clone() };
            let trained = train_head(samples, tau, &head_cfg)?;
            heads.push(BankHead {
                tau,
                head: trained.head,
                metadata: HeadMetadata {
                    epochs: cfg.epochs,
                    best_epoch: trained.best_epoch,
                    train_accuracy: trained.train_accuracy,
                    val_accuracy: trained.val_accuracy,
                },
            });
        }
        Ok(TaggerBank { extractor, decision_threshold: 0.5, heads })
    }

    pub fn taus(&self) -> Vec<f64> {
        self.heads.iter().map(|h| h.tau).collect()
    }

    /// Finds the head whose tau matches within 1e-9.
    pub fn head_for(&self, tau: f64) -> Result<&BankHead> {
        self.heads
            .iter()
            .find(|h| (h.tau - tau).abs() < 1e-9)
            .ok_or_else(|| {
                Error::input(format!(
                    "bank has no head for tau={tau}; available: {:?}",
                    self.taus()
                ))
            })
    }

    /// True when the bank has a head for every tau in `grid`.
    pub fn covers(&self, grid: &[f64]) -> bool {
        grid.iter().all(|&tau| self.head_for(tau).is_ok())
    }

    pub fn param_count(&self) -> usize {
        self.heads.iter().map(|h| h.head.param_count()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = BankRepr {
            extractor: self.extractor,
            decision_threshold: self.decision_threshold,
            heads: self
                .heads
                .iter()
                .map(|h| BankHeadRepr {
                    tau: h.tau,
                    head: (&h.head).into(),
                    metadata: h.metadata.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&repr)?)
    }

    pub fn from_json(json: &str) -> Result<TaggerBank> {
        let repr: BankRepr = serde_json::from_str(json)?;
        repr.extractor.validate()?;
        if repr.heads.is_empty() {
            return Err(Error::format("tagger bank has no heads".to_string()));
        }
        if !(repr.decision_threshold > 0.0 && repr.decision_threshold < 1.0) {
            return Err(Error::format(format!(
                "decision_threshold must be in (0, 1), got {}",
                repr.decision_threshold
            )));
        }
        let mut heads = Vec::with_capacity(repr.heads.len());
        for h in repr.heads {
            let head: MlpHead = h.head.try_into()?;
            if head.input_dim() != repr.extractor.dimension {
                return Err(Error::format(format!(
                    "head for tau={} expects {} dims but extractor produces {}",
                    h.tau,
                    head.input_dim(),
                    repr.extractor.dimension
                )));
            }
            heads.push(BankHead { tau: h.tau, head, metadata: h.metadata });
        }
        Ok(TaggerBank {
            extractor: repr.extractor,
            decision_threshold: repr.decision_threshold,
            heads,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::cli::io::atomic_write(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<TaggerBank> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        TaggerBank::from_json(&text)
    }
}

/// Asks the bank's head for `tau` whether the prefix looks low-entropy.
/// Returns the binary call and the head's raw probability.
pub fn predict_low(bank: &TaggerBank, prefix: &[TokenId], tau: f64) -> Result<(bool, f64)> {
    if bank.extractor.variant == ExtractorVariant::ExternalFile {
        return Err(Error::input(
            "this bank was trained on external embeddings; it cannot featurize raw prefixes"
                .to_string(),
        ));
    }
    let features = extract(prefix, &bank.extractor)?;
    let head = bank.head_for(tau)?;
    let p = head.head.forward(&features)?;
    Ok((p >= bank.decision_threshold, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlledEntropyModel, ScheduleEntry};

    fn two_phase_model() -> ControlledEntropyModel {
        ControlledEntropyModel::new(
            16,
            vec![
                ScheduleEntry { target_entropy: 0.05, peak: 3 },
                ScheduleEntry { target_entropy: 2.0, peak: 7 },
            ],
        )
        .unwrap()
    }

    fn small_extractor() -> ExtractorConfig {
        ExtractorConfig { dimension: 32, ..ExtractorConfig::default() }
    }

    fn training_sequences(n: usize, len: usize, seed: u64) -> Vec<Vec<TokenId>> {
        let mut rng = crate::rng::Prng::seeded(seed);
        (0..n)
            .map(|_| (0..len).map(|_| rng.next_below(16) as TokenId).collect())
            .collect()
    }

    #[test]
    fn sample_counts_follow_sequence_lengths() {
        let model = two_phase_model();
        let seqs = vec![vec![0, 1, 2, 3, 4], vec![5, 6]];
        let samples = collect_samples(&model, &seqs, &small_extractor()).unwrap();
        assert_eq!(samples.len(), 4 + 1);
        for s in &samples {
            assert_eq!(s.features.len(), 32);
            assert!(s.entropy.is_finite() && s.entropy >= 0.0);
        }
    }

    #[test]
    fn sample_entropies_alternate_with_the_schedule() {
        let model = two_phase_model();
        let seqs = vec![vec![1u32; 7]];
        let samples = collect_samples(&model, &seqs, &small_extractor()).unwrap();
        for (i, s) in samples.iter().enumerate() {
            let prefix_len = i + 1;
            if prefix_len % 2 == 1 {
                assert!(s.entropy > 1.0, "odd prefix {prefix_len}: {}", s.entropy);
            } else {
                assert!(s.entropy < 0.2, "even prefix {prefix_len}: {}", s.entropy);
            }
        }
    }

    #[test]
    fn external_rows_must_align_exactly() {
        let model = two_phase_model();
        let seqs = vec![vec![0, 1, 2]];
        let short = EmbeddingTable::new(4, vec![vec![0.0; 4]]).unwrap();
        assert!(collect_samples_external(&model, &seqs, &short).is_err());
        let exact = EmbeddingTable::new(4, vec![vec![1.0, 0.0, 0.0, 0.0]; 2]).unwrap();
        let samples = collect_samples_external(&model, &seqs, &exact).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].features, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bank_round_trips_through_json() {
        let model = two_phase_model();
        let seqs = training_sequences(30, 8, 11);
        let samples = collect_samples(&model, &seqs, &small_extractor()).unwrap();
        let cfg = TrainConfig { epochs: 2, hidden_dim: 8, ..TrainConfig::default() };
        let bank = TaggerBank::train(&samples, &[0.3, 0.6], small_extractor(), &cfg).unwrap();
        let json = bank.to_json().unwrap();
        let back = TaggerBank::from_json(&json).unwrap();
        assert_eq!(back.heads.len(), 2);
        assert_eq!(back.decision_threshold, 0.5);
        let prefix = vec![1u32, 2, 3];
        for tau in [0.3, 0.6] {
            let a = predict_low(&bank, &prefix, tau).unwrap();
            let b = predict_low(&back, &prefix, tau).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(
            bank.head_for(0.3).unwrap().metadata,
            back.head_for(0.3).unwrap().metadata
        );
    }

    #[test]
    fn missing_tau_is_an_input_error() {
        let model = two_phase_model();
        let seqs = training_sequences(20, 6, 3);
        let samples = collect_samples(&model, &seqs, &small_extractor()).unwrap();
        let cfg = TrainConfig { epochs: 1, hidden_dim: 4, ..TrainConfig::default() };
        let bank = TaggerBank::train(&samples, &[0.6], small_extractor(), &cfg).unwrap();
        assert!(bank.head_for(0.6).is_ok());
        let err = bank.head_for(0.9).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(bank.covers(&[0.6]));
        assert!(!bank.covers(&[0.6, 0.9]));
    }

    #[test]
    fn heads_learn_a_schedule_driven_entropy_split() {
        // Prefix length parity fully determines entropy under the two-phase
        // schedule, and parity of the anchored n-grams' position is not
        // directly observable, so give the model sequences whose last token
        // encodes parity: even positions emit token 0, odd positions 1.
        let model = two_phase_model();
        let seqs: Vec<Vec<TokenId>> = (0..40)
            .map(|s| {
                (0..10)
                    .map(|i| if i % 2 == 0 { (s % 4) as TokenId } else { 8 + (s % 4) as TokenId })
                    .collect()
            })
            .collect();
        let samples = collect_samples(&model, &seqs, &small_extractor()).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            hidden_dim: 16,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let bank = TaggerBank::train(&samples, &[0.6], small_extractor(), &cfg).unwrap();
        let meta = &bank.head_for(0.6).unwrap().metadata;
        assert!(
            meta.val_accuracy > 0.9,
            "val accuracy too low: {}",
            meta.val_accuracy
        );
    }

    #[test]
    fn predict_low_rejects_external_banks() {
        let extractor = ExtractorConfig {
            variant: ExtractorVariant::ExternalFile,
            dimension: 4,
            ..ExtractorConfig::default()
        };
        let mut rng = crate::rng::Prng::seeded(5);
        let head = MlpHead::new(4, 4, mlp::OutputKind::Sigmoid, &mut rng).unwrap();
        let bank = TaggerBank {
            extractor,
            decision_threshold: 0.5,
            heads: vec![BankHead {
                tau: 0.6,
                head,
                metadata: HeadMetadata {
                    epochs: 0,
                    best_epoch: 0,
                    train_accuracy: 0.0,
                    val_accuracy: 0.0,
                },
            }],
        };
        assert!(predict_low(&bank, &[1, 2], 0.6).is_err());
    }
}

