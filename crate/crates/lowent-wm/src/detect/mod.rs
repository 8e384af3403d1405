//! Watermark detectors: full, selective, entropy-weighted, and tagger-gated.
//!
//! Every detector receives suspect tokens only. Position `t` is scored
//! against the green/red partition seeded by token `t - 1`; the first
//! position needs a predecessor from outside the document, so callers pass
//! an optional anchor (typically the last prompt token). With no anchor
//! the first position simply goes unscored.
//!
//! Degenerate inputs (too short, nothing gated) produce a report with the
//! `insufficient` flag, `z = 0`, and a false verdict instead of an error,
//! so scoring a batch never aborts on one bad document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{softmax, LogitProvider, TokenId};
use crate::navigator::{navigate, NavigatorConfig, NavigatorResult, TauStats};
use crate::tagger::{predict_low, TaggerBank};
use crate::watermark::{partition_vocab, PartitionTable};
use crate::watermark::{shannon_entropy, WatermarkConfig};

/// Outcome of one detection pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub z: f64,
    pub green_count: u64,
    pub total_tokens: u64,
    pub scored_tokens: u64,
    pub watermark_ratio: f64,
    pub tau_hat: Option<f64>,
    pub verdict: bool,
    pub insufficient: bool,
}

/// Where per-position entropies come from when the detector gates or
/// weights positions.
pub enum EntropySource<'a> {
    /// Recompute exactly with a logit provider; `context` is prepended to
    /// the suspect prefix (typically the prompt).
    Oracle { model: &'a dyn LogitProvider, context: &'a [TokenId] },
    /// Ask a trained tagger bank for a binary low/high call per position.
    Tagger { bank: &'a TaggerBank },
    /// Precomputed entropies, one per suspect token.
    External(&'a [f64]),
}

/// The shared z statistic. Implementations and reference fixtures must use
/// this exact operation order so results compare bitwise.
fn z_statistic(green: f64, scored: f64, gamma: f64) -> f64 {
    (green - gamma * scored) / (scored * gamma * (1.0 - gamma)).sqrt()
}

/// z for a fully scored document: `(|S|_G - gamma*|T|) / sqrt(|T|*gamma*(1-gamma))`.
pub fn z_score_full(green_count: u64, total: u64, gamma: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::InsufficientData(
            "cannot compute z over zero scored tokens".to_string(),
        ));
    }
    Ok(z_statistic(green_count as f64, total as f64, gamma))
}

fn validate_tokens(tokens: &[TokenId], vocab_size: usize, anchor: Option<TokenId>) -> Result<()> {
    if vocab_size < 2 {
        return Err(Error::config(format!("vocab size must be >= 2, got {vocab_size}")));
    }
    if let Some(bad) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::input(format!(
            "token id {bad} is outside the vocabulary of size {vocab_size}"
        )));
    }
    if let Some(a) = anchor {
        if a as usize >= vocab_size {
            return Err(Error::input(format!(
                "anchor token {a} is outside the vocabulary of size {vocab_size}"
            )));
        }
    }
    Ok(())
}

/// Scored positions with their seeding predecessors, in document order.
fn scoring_range(tokens: &[TokenId], anchor: Option<TokenId>) -> Vec<(usize, TokenId)> {
    match anchor {
        Some(a) => (0..tokens.len())
            .map(|i| (i, if i == 0 { a } else { tokens[i - 1] }))
            .collect(),
        None => (1..tokens.len()).map(|i| (i, tokens[i - 1])).collect(),
    }
}

fn assemble(
    z: f64,
    green: u64,
    total: usize,
    scored: usize,
    tau_hat: Option<f64>,
    cfg: &WatermarkConfig,
    insufficient: bool,
) -> DetectionReport {
    let watermark_ratio = if total == 0 { 0.0 } else { scored as f64 / total as f64 };
    DetectionReport {
        z,
        green_count: green,
        total_tokens: total as u64,
        scored_tokens: scored as u64,
        watermark_ratio,
        tau_hat,
        verdict: !insufficient && z > cfg.z_threshold,
        insufficient,
    }
}

fn count_greens(
    tokens: &[TokenId],
    anchor: Option<TokenId>,
    mut is_green: impl FnMut(TokenId, TokenId) -> bool,
) -> (u64, usize) {
    let range = scoring_range(tokens, anchor);
    let mut green = 0u64;
    for &(i, prev) in &range {
        if is_green(prev, tokens[i]) {
            green += 1;
        }
    }
    (green, range.len())
}

/// Full detection: every position with a predecessor is scored.
pub fn detect_full(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    vocab_size: usize,
    anchor: Option<TokenId>,
) -> Result<DetectionReport> {
    cfg.validate()?;
    validate_tokens(tokens, vocab_size, anchor)?;
    let mut partition_err = None;
    let (green, scored) = count_greens(tokens, anchor, |prev, tok| {
        match partition_vocab(prev, cfg.key, cfg.gamma, vocab_size) {
            Ok(p) => p.is_green(tok),
            Err(e) => {
                partition_err.get_or_insert(e);
                false
            }
        }
    });
    if let Some(e) = partition_err {
        return Err(e);
    }
    if scored == 0 {
        return Ok(assemble(0.0, 0, tokens.len(), 0, None, cfg, true));
    }
    let z = z_statistic(green as f64, scored as f64, cfg.gamma);
    Ok(assemble(z, green, tokens.len(), scored, None, cfg, false))
}

/// Full detection against a prebuilt partition table. Identical output to
/// [`detect_full`]; used where many documents share one key.
pub fn detect_full_with_table(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    table: &PartitionTable,
    anchor: Option<TokenId>,
) -> Result<DetectionReport> {
    cfg.validate()?;
    validate_tokens(tokens, table.vocab_size(), anchor)?;
    let (green, scored) = count_greens(tokens, anchor, |prev, tok| table.is_green(prev, tok));
    if scored == 0 {
        return Ok(assemble(0.0, 0, tokens.len(), 0, None, cfg, true));
    }
    let z = z_statistic(green as f64, scored as f64, cfg.gamma);
    Ok(assemble(z, green, tokens.len(), scored, None, cfg, false))
}

/// The prefix a position's entropy or tagger call is conditioned on.
/// Position 0 can only be scored via an anchor; with no explicit context
/// the anchor itself is the one-token prefix.
fn prefix_for<'a>(
    tokens: &'a [TokenId],
    i: usize,
    context: &'a [TokenId],
    anchor: Option<TokenId>,
    scratch: &'a mut Vec<TokenId>,
) -> &'a [TokenId] {
    if context.is_empty() {
        if i == 0 {
            scratch.clear();
            scratch.push(anchor.expect("position 0 is only scored with an anchor"));
            scratch.as_slice()
        } else {
            &tokens[..i]
        }
    } else {
        scratch.clear();
        scratch.extend_from_slice(context);
        scratch.extend_from_slice(&tokens[..i]);
        scratch.as_slice()
    }
}

fn oracle_entropy(
    model: &dyn LogitProvider,
    prefix: &[TokenId],
) -> Result<f64> {
    let logits = model.next_logits(prefix)?;
    Ok(shannon_entropy(&softmax(&logits)))
}

/// Selective detection: only positions whose entropy exceeds `tau` (or
/// which the tagger calls high-entropy) contribute to the statistic.
pub fn detect_selective(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    vocab_size: usize,
    tau: f64,
    source: &EntropySource,
    anchor: Option<TokenId>,
) -> Result<DetectionReport> {
    cfg.validate()?;
    validate_tokens(tokens, vocab_size, anchor)?;
    if tau.is_nan() {
        return Err(Error::config("tau must not be NaN".to_string()));
    }
    match source {
        EntropySource::Oracle { model, .. } => {
            if model.vocab_size() != vocab_size {
                return Err(Error::config(format!(
                    "entropy model covers {} tokens but detection assumes {vocab_size}",
                    model.vocab_size()
                )));
            }
        }
        EntropySource::External(h) => {
            if h.len() != tokens.len() {
                return Err(Error::input(format!(
                    "got {} entropies for {} tokens",
                    h.len(),
                    tokens.len()
                )));
            }
            if let Some(bad) = h.iter().find(|v| !v.is_finite()) {
                return Err(Error::input(format!("non-finite entropy value {bad}")));
            }
        }
        EntropySource::Tagger { .. } => {}
    }

    let range = scoring_range(tokens, anchor);
    let mut scratch = Vec::new();
    let mut green = 0u64;
    let mut scored = 0usize;
    for &(i, prev) in &range {
        let gate_open = match source {
            EntropySource::External(h) => h[i] > tau,
            EntropySource::Oracle { model, context } => {
                let prefix = prefix_for(tokens, i, context, anchor, &mut scratch);
                oracle_entropy(*model, prefix)? > tau
            }
            EntropySource::Tagger { bank } => {
                let prefix = prefix_for(tokens, i, &[], anchor, &mut scratch);
                !predict_low(bank, prefix, tau)?.0
            }
        };
        if !gate_open {
            continue;
        }
        scored += 1;
        let partition = partition_vocab(prev, cfg.key, cfg.gamma, vocab_size)?;
        if partition.is_green(tokens[i]) {
            green += 1;
        }
    }
    if scored == 0 {
        return Ok(assemble(0.0, 0, tokens.len(), 0, None, cfg, true));
    }
    let z = z_statistic(green as f64, scored as f64, cfg.gamma);
    Ok(assemble(z, green, tokens.len(), scored, None, cfg, false))
}

/// Entropy-weighted detection: every position is scored, weighted by its
/// entropy (clamped at zero), so near-deterministic positions contribute
/// almost nothing. Requires continuous entropies, so a tagger bank is not
/// an acceptable source.
pub fn detect_ewd(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    vocab_size: usize,
    source: &EntropySource,
    anchor: Option<TokenId>,
) -> Result<DetectionReport> {
    cfg.validate()?;
    validate_tokens(tokens, vocab_size, anchor)?;
    match source {
        EntropySource::Tagger { .. } => {
            return Err(Error::input(
                "entropy-weighted detection needs continuous entropies; \
                 a tagger bank only provides binary labels"
                    .to_string(),
            ));
        }
        EntropySource::Oracle { model, .. } => {
            if model.vocab_size() != vocab_size {
                return Err(Error::config(format!(
                    "entropy model covers {} tokens but detection assumes {vocab_size}",
                    model.vocab_size()
                )));
            }
        }
        EntropySource::External(h) => {
            if h.len() != tokens.len() {
                return Err(Error::input(format!(
                    "got {} entropies for {} tokens",
                    h.len(),
                    tokens.len()
                )));
            }
            if let Some(bad) = h.iter().find(|v| !v.is_finite()) {
                return Err(Error::input(format!("non-finite entropy value {bad}")));
            }
        }
    }

    let range = scoring_range(tokens, anchor);
    let mut scratch = Vec::new();
    let mut green = 0u64;
    let mut sum_green = 0.0;
    let mut sum_w = 0.0;
    let mut sum_sq = 0.0;
    for &(i, prev) in &range {
        let h = match source {
            EntropySource::External(h) => h[i],
            EntropySource::Oracle { model, context } => {
                let prefix = prefix_for(tokens, i, context, anchor, &mut scratch);
                oracle_entropy(*model, prefix)?
            }
            EntropySource::Tagger { .. } => unreachable!("rejected above"),
        };
        let w = h.max(0.0);
        sum_w += w;
        sum_sq += w * w;
        let partition = partition_vocab(prev, cfg.key, cfg.gamma, vocab_size)?;
        if partition.is_green(tokens[i]) {
            green += 1;
            sum_green += w;
        }
    }
    if sum_sq == 0.0 || range.is_empty() {
        return Ok(assemble(0.0, green, tokens.len(), range.len(), None, cfg, true));
    }
    let z = (sum_green - cfg.gamma * sum_w) / (sum_sq * cfg.gamma * (1.0 - cfg.gamma)).sqrt();
    Ok(assemble(z, green, tokens.len(), range.len(), None, cfg, false))
}

/// Tagger-gated detection with threshold search: walks the tau grid with
/// tagger-gated selective scoring, picks `tau_hat`, and reports the pass
/// at the chosen threshold alongside the walk itself.
pub fn detect_ie_traced(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    vocab_size: usize,
    bank: &TaggerBank,
    nav_cfg: &NavigatorConfig,
    anchor: Option<TokenId>,
) -> Result<(DetectionReport, NavigatorResult)> {
    cfg.validate()?;
    nav_cfg.validate()?;
    validate_tokens(tokens, vocab_size, anchor)?;
    let grid = nav_cfg.grid();
    let missing: Vec<f64> = grid
        .iter()
        .copied()
        .filter(|&tau| bank.head_for(tau).is_err())
        .collect();
    if !missing.is_empty() {
        return Err(Error::input(format!(
            "tagger bank is missing heads for thresholds {missing:?}; \
             it covers {:?}",
            bank.taus()
        )));
    }
    let source = EntropySource::Tagger { bank };
    let nav = navigate(nav_cfg, |tau| {
        let report = detect_selective(tokens, cfg, vocab_size, tau, &source, anchor)?;
        Ok(TauStats {
            tau,
            watermark_ratio: report.watermark_ratio,
            green_count: report.green_count,
        })
    })?;
    let mut report = detect_selective(tokens, cfg, vocab_size, nav.tau_hat, &source, anchor)?;
    report.tau_hat = Some(nav.tau_hat);
    Ok((report, nav))
}

/// As [`detect_ie_traced`], reporting only the final pass.
pub fn detect_ie(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    vocab_size: usize,
    bank: &TaggerBank,
    nav_cfg: &NavigatorConfig,
    anchor: Option<TokenId>,
) -> Result<DetectionReport> {
    detect_ie_traced(tokens, cfg, vocab_size, bank, nav_cfg, anchor).map(|(r, _)| r)
}
