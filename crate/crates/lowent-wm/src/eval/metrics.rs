//! Detectability and efficiency metrics over detection scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// z scores from watermarked (positive) and clean (negative) documents.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoreSet {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Result<Self> {
        let set = ScoreSet { positives, negatives };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(Error::input(format!(
                "both score sides must be non-empty, got {} positive and {} negative",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        if self
            .positives
            .iter()
            .chain(&self.negatives)
            .any(|v| v.is_nan())
        {
            return Err(Error::input("scores must not contain NaN".to_string()));
        }
        Ok(())
    }
}

/// Area under the ROC curve via the rank-sum formulation; tied scores
/// across the two sides count half.
pub fn auroc(scores: &ScoreSet) -> Result<f64> {
    scores.validate()?;
    let n_pos = scores.positives.len();
    let n_neg = scores.negatives.len();
    let mut all: Vec<(f64, bool)> = scores
        .positives
        .iter()
        .map(|&s| (s, true))
        .chain(scores.negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("no NaN after validation"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Average rank of the tie group, 1-based.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Largest true-positive rate among thresholds drawn from the negative
/// order statistics whose empirical false-positive rate stays within
/// `fpr_cap`. A score counts as positive at threshold `t` when it is
/// strictly above `t`, so the cap is always attainable at `max(negatives)`.
pub fn tpr_at_fpr(scores: &ScoreSet, fpr_cap: f64) -> Result<f64> {
    scores.validate()?;
    if !(0.0..=1.0).contains(&fpr_cap) {
        return Err(Error::input(format!("fpr cap must be in [0, 1], got {fpr_cap}")));
    }
    let mut neg = scores.negatives.clone();
    neg.sort_by(|a, b| a.partial_cmp(b).expect("no NaN after validation"));
    let n_neg = neg.len() as f64;

    let mut threshold = None;
    let mut k = 0;
    while k < neg.len() {
        let candidate = neg[k];
        let above = neg.len() - neg.partition_point(|&x| x <= candidate);
        if above as f64 / n_neg <= fpr_cap {
            threshold = Some(candidate);
            break;
        }
        while k < neg.len() && neg[k] == candidate {
            k += 1;
        }
    }
    let threshold = threshold.expect("max(neg) always satisfies the cap");
    let hits = scores.positives.iter().filter(|&&p| p > threshold).count();
    Ok(hits as f64 / scores.positives.len() as f64)
}

/// Unified effectiveness: the quality ratio averaged with the mean of the
/// two detectability metrics.
pub fn ues(pass_rate: f64, pass_rate_non: f64, auroc: f64, tpr: f64) -> Result<f64> {
    if !(pass_rate_non > 0.0) {
        return Err(Error::input(format!(
            "unwatermarked pass rate must be > 0, got {pass_rate_non}"
        )));
    }
    Ok((pass_rate / pass_rate_non + (auroc + tpr) / 2.0) / 2.0)
}

/// Effectiveness per billion detector-side parameters.
pub fn ppr(ues: f64, params_billions: f64) -> Result<f64> {
    if !(params_billions > 0.0) {
        return Err(Error::input(format!(
            "parameter count must be > 0, got {params_billions}"
        )));
    }
    Ok(ues / params_billions)
}

/// One evaluated configuration's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub tpr_at_fpr: f64,
    pub pass_rate: f64,
    pub pass_rate_non: f64,
    pub ues: f64,
    pub params_billions: Option<f64>,
    pub ppr: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn set(pos: &[f64], neg: &[f64]) -> ScoreSet {
        ScoreSet::new(pos.to_vec(), neg.to_vec()).unwrap()
    }

    /// Literal pairwise definition, used as the independent reference.
    fn auroc_pairwise(pos: &[f64], neg: &[f64]) -> f64 {
        let mut total = 0.0;
        for &p in pos {
            for &n in neg {
                total += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn auroc_hand_values() {
        assert_eq!(auroc(&set(&[2.0, 3.0], &[1.0, 2.0])).unwrap(), 0.875);
        assert_eq!(auroc(&set(&[5.0, 6.0], &[1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(auroc(&set(&[1.0, 2.0], &[1.0, 2.0])).unwrap(), 0.5);
        assert_eq!(auroc(&set(&[0.0], &[5.0])).unwrap(), 0.0);
    }

    #[test]
    fn auroc_matches_pairwise_reference_on_random_fixtures() {
        let mut rng = Prng::seeded(99);
        for trial in 0..50 {
            let n_pos = 1 + rng.next_below(50) as usize;
            let n_neg = 1 + rng.next_below(50) as usize;
            // Coarse grid values force plenty of ties.
            let pos: Vec<f64> = (0..n_pos).map(|_| rng.next_below(10) as f64 / 2.0).collect();
            let neg: Vec<f64> = (0..n_neg).map(|_| rng.next_below(10) as f64 / 2.0).collect();
            let fast = auroc(&set(&pos, &neg)).unwrap();
            let slow = auroc_pairwise(&pos, &neg);
            assert!(
                (fast - slow).abs() < 1e-12,
                "trial {trial}: ranked {fast} vs pairwise {slow}"
            );
        }
    }

    #[test]
    fn empty_sides_are_rejected() {
        assert!(ScoreSet::new(vec![], vec![1.0]).is_err());
        assert!(ScoreSet::new(vec![1.0], vec![]).is_err());
        assert!(ScoreSet::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn tpr_on_separated_sets_is_one() {
        let scores = set(&[10.0, 11.0, 12.0], &[1.0, 2.0, 3.0]);
        assert_eq!(tpr_at_fpr(&scores, 0.05).unwrap(), 1.0);
    }

    #[test]
    fn tpr_cap_zero_scores_above_the_largest_negative() {
        let scores = set(&[2.5, 3.5, 4.5], &[1.0, 3.0]);
        // Threshold must be max(neg) = 3.0; only 3.5 and 4.5 clear it.
        let tpr = tpr_at_fpr(&scores, 0.0).unwrap();
        assert!((tpr - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tpr_on_identical_twenty_point_sets() {
        let points: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let scores = set(&points, &points);
        // The smallest threshold with FPR <= 0.05 is 18.0 (one negative
        // above it), and exactly one positive clears it.
        assert_eq!(tpr_at_fpr(&scores, 0.05).unwrap(), 0.05);
    }

    #[test]
    fn tpr_threshold_respects_tied_negatives() {
        let scores = set(&[4.0, 5.0], &[3.0, 3.0, 3.0, 5.0]);
        // At threshold 3.0, FPR = 1/4 > 0.2; at threshold 5.0, FPR = 0.
        let tpr = tpr_at_fpr(&scores, 0.2).unwrap();
        assert_eq!(tpr, 0.0);
        // At cap 0.25 the threshold drops to 3.0 and both positives clear it.
        let loose = tpr_at_fpr(&scores, 0.25).unwrap();
        assert_eq!(loose, 1.0);
    }

    #[test]
    fn ues_reproduces_published_rows() {
        let sweet = ues(0.301, 0.334, 0.944, 0.789).unwrap();
        assert!((sweet - 0.884).abs() < 0.001, "sweet row: {sweet}");
        let ie = ues(0.294, 0.334, 0.941, 0.787).unwrap();
        assert!((ie - 0.872).abs() < 0.001, "ie row: {ie}");
        let ewd_large = ues(0.295, 0.334, 0.943, 0.780).unwrap();
        assert!((ewd_large - 0.872).abs() < 0.001, "ewd large row: {ewd_large}");
        let ewd_small = ues(0.295, 0.334, 0.931, 0.745).unwrap();
        assert!((ewd_small - 0.861).abs() < 0.001, "ewd small row: {ewd_small}");
    }

    #[test]
    fn ues_perfect_configuration_scores_one() {
        assert_eq!(ues(0.5, 0.5, 1.0, 1.0).unwrap(), 1.0);
        assert!(ues(0.5, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ppr_reproduces_published_rows() {
        let sweet = ppr(ues(0.301, 0.334, 0.944, 0.789).unwrap(), 15.5).unwrap();
        assert!((sweet - 0.057).abs() < 0.0005, "sweet ppr: {sweet}");
        let ie = ppr(ues(0.294, 0.334, 0.941, 0.787).unwrap(), 0.13).unwrap();
        assert!((ie - 6.709).abs() < 0.01, "ie ppr: {ie}");
        assert_eq!(ppr(0.72, 1.0).unwrap(), 0.72);
        assert!(ppr(0.72, 0.0).is_err());
        assert!(ppr(0.72, -2.0).is_err());
    }
}
