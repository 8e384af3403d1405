//! Synthetic model emitting distributions with exactly controlled entropy.
//!
//! Each schedule entry names a target entropy (nats) and a peak token. The
//! emitted distribution puts mass `1 - eps` on the peak and spreads `eps`
//! uniformly over the remaining ids, with `eps` solved by bisection so the
//! Shannon entropy hits the target within 1e-6. Generation step `t` uses
//! schedule entry `prefix_len mod schedule_len`, which keeps `next_logits`
//! a pure function of the prefix.

use serde::{Deserialize, Serialize};

use super::{check_prefix, LogitProvider, LogitVector, TokenId};
use crate::error::{Error, Result};

/// One step of the entropy schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Target Shannon entropy in nats, within `[0, ln(vocab_size)]`.
    pub target_entropy: f64,
    /// Token receiving the dominant probability mass.
    pub peak: TokenId,
}

#[derive(Debug, Clone)]
pub struct ControlledEntropyModel {
    vocab_size: usize,
    schedule: Vec<ScheduleEntry>,
    /// Off-peak mass per schedule entry, solved from the entropy target.
    eps: Vec<f64>,
}

impl ControlledEntropyModel {
    pub fn new(vocab_size: usize, schedule: Vec<ScheduleEntry>) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::config("controlled model needs vocab_size >= 2"));
        }
        if schedule.is_empty() {
            return Err(Error::config("schedule must be non-empty"));
        }
        let h_max = (vocab_size as f64).ln();
        let mut eps = Vec::with_capacity(schedule.len());
        for entry in &schedule {
            if entry.peak as usize >= vocab_size {
                return Err(Error::config(format!(
                    "peak id {} out of range for vocab_size {vocab_size}",
                    entry.peak
                )));
            }
            if !entry.target_entropy.is_finite()
                || entry.target_entropy < 0.0
                || entry.target_entropy > h_max
            {
                return Err(Error::config(format!(
                    "target entropy {} outside [0, {h_max:.6}]",
                    entry.target_entropy
                )));
            }
            eps.push(solve_eps(entry.target_entropy, vocab_size));
        }
        Ok(ControlledEntropyModel { vocab_size, schedule, eps })
    }

    pub fn schedule(&self) -> &[ScheduleEntry] {
        &self.schedule
    }

    /// The probability vector emitted for a prefix of the given length.
    pub fn step_distribution(&self, prefix_len: usize) -> (Vec<f64>, ScheduleEntry) {
        let idx = prefix_len % self.schedule.len();
        let entry = self.schedule[idx];
        let eps = self.eps[idx];
        let off_peak = eps / (self.vocab_size - 1) as f64;
        let mut probs = vec![off_peak; self.vocab_size];
        probs[entry.peak as usize] = 1.0 - eps;
        (probs, entry)
    }
}

/// Entropy of the peaked distribution as a function of the off-peak mass.
fn peaked_entropy(eps: f64, vocab_size: usize) -> f64 {
    let mut h = 0.0;
    if eps < 1.0 {
        h -= (1.0 - eps) * (1.0 - eps).ln();
    }
    if eps > 0.0 {
        let per = eps / (vocab_size - 1) as f64;
        h -= eps * per.ln();
    }
    h
}

/// Bisection for the off-peak mass hitting a target entropy. Entropy is
/// strictly increasing in eps on `[0, (|V|-1)/|V|]`, so the bracket only
/// narrows; 200 halvings leave the realized entropy within 1e-6 of the
/// target while keeping eps strictly positive (finite logits).
fn solve_eps(target: f64, vocab_size: usize) -> f64 {
    let eps_uniform = (vocab_size - 1) as f64 / vocab_size as f64;
    if target >= peaked_entropy(eps_uniform, vocab_size) {
        return eps_uniform;
    }
    let (mut lo, mut hi) = (0.0_f64, eps_uniform);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if peaked_entropy(mid, vocab_size) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // hi is the smallest bracket edge at or above the target and is
    // strictly positive, so every token keeps nonzero mass.
    hi
}

impl LogitProvider for ControlledEntropyModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, prefix: &[TokenId]) -> Result<LogitVector> {
        check_prefix(prefix, self.vocab_size)?;
        let (probs, _) = self.step_distribution(prefix.len());
        LogitVector::new(probs.iter().map(|p| p.ln()).collect())
    }

    fn param_count(&self) -> usize {
        2 * self.schedule.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::softmax;
    use crate::watermark::shannon_entropy;

    #[test]
    fn zero_entropy_target_is_one_hot_at_the_peak() {
        let model = ControlledEntropyModel::new(
            8,
            vec![ScheduleEntry { target_entropy: 0.0, peak: 3 }],
        )
        .unwrap();
        let p = softmax(&model.next_logits(&[0]).unwrap());
        assert!(p[3] > 1.0 - 1e-6);
        for (i, &x) in p.iter().enumerate() {
            if i != 3 {
                assert!(x < 1e-6);
                assert!(x > 0.0, "off-peak mass must stay positive");
            }
        }
        assert!(shannon_entropy(&p) <= 1e-6);
    }

    #[test]
    fn realized_entropy_matches_targets_within_1e6() {
        let vocab_size = 32;
        let h_max = (vocab_size as f64).ln();
        let targets = [0.0, 0.05, 0.3, 0.6, 1.0, 1.5, 2.0, 3.0, h_max];
        for (i, &t) in targets.iter().enumerate() {
            let model = ControlledEntropyModel::new(
                vocab_size,
                vec![ScheduleEntry { target_entropy: t, peak: (i % vocab_size) as TokenId }],
            )
            .unwrap();
            let p = softmax(&model.next_logits(&[1]).unwrap());
            let h = shannon_entropy(&p);
            assert!(
                (h - t).abs() <= 1e-6,
                "target {t}: realized {h} differs by more than 1e-6"
            );
        }
    }

    #[test]
    fn logits_are_finite_even_at_zero_entropy() {
        let model = ControlledEntropyModel::new(
            16,
            vec![ScheduleEntry { target_entropy: 0.0, peak: 0 }],
        )
        .unwrap();
        let logits = model.next_logits(&[2]).unwrap();
        assert!(logits.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn schedule_cycles_with_prefix_length() {
        let model = ControlledEntropyModel::new(
            8,
            vec![
                ScheduleEntry { target_entropy: 0.0, peak: 1 },
                ScheduleEntry { target_entropy: 2.0, peak: 5 },
            ],
        )
        .unwrap();
        let l1 = model.next_logits(&[0]).unwrap();
        let l2 = model.next_logits(&[0, 0]).unwrap();
        let l3 = model.next_logits(&[0, 0, 0]).unwrap();
        assert_ne!(l1.as_slice(), l2.as_slice());
        assert_eq!(l1.as_slice(), l3.as_slice());
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ControlledEntropyModel::new(1, vec![ScheduleEntry { target_entropy: 0.0, peak: 0 }]).is_err());
        assert!(ControlledEntropyModel::new(4, vec![]).is_err());
        assert!(ControlledEntropyModel::new(
            4,
            vec![ScheduleEntry { target_entropy: 0.0, peak: 9 }]
        )
        .is_err());
        assert!(ControlledEntropyModel::new(
            4,
            vec![ScheduleEntry { target_entropy: 99.0, peak: 0 }]
        )
        .is_err());
    }

    #[test]
    fn same_prefix_gives_identical_logits() {
        let model = ControlledEntropyModel::new(
            8,
            vec![ScheduleEntry { target_entropy: 1.2, peak: 2 }],
        )
        .unwrap();
        assert_eq!(
            model.next_logits(&[1, 2, 3]).unwrap().as_slice(),
            model.next_logits(&[1, 2, 3]).unwrap().as_slice()
        );
    }
}
