//! Per-sample search for the detection entropy threshold.
//!
//! The generator and the detector cannot share a threshold, so the detector
//! walks a fixed tau grid and compares adjacent thresholds: `p` is the
//! ratio of green counts (previous over current) and `w` the ratio of
//! watermark ratios. The walk stops at the first step where `p > 1` and
//! `w < 1`, i.e. where loosening the gate added scored positions while
//! losing green ones, and selects the previous threshold. If the rule
//! never fires the starting threshold stands.
//!
//! Scoring is injected as a closure so the walk can be driven by
//! tagger-gated selective detection, oracle-gated detection, or canned
//! statistics in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Walk order over the tau grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HighToLow,
    LowToHigh,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Direction> {
        match s {
            "high-to-low" => Ok(Direction::HighToLow),
            "low-to-high" => Ok(Direction::LowToHigh),
            other => Err(Error::config(format!(
                "unknown direction {other:?}; expected high-to-low or low-to-high"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NavigatorConfig {
    pub tau_start: f64,
    pub delta_step: f64,
    pub direction: Direction,
}

impl Default for NavigatorConfig {
    fn default() -> Self {
        NavigatorConfig { tau_start: 1.5, delta_step: 0.3, direction: Direction::HighToLow }
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

impl NavigatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.tau_start.is_finite() || self.tau_start <= 0.0 {
            return Err(Error::config("tau_start must be finite and > 0"));
        }
        if !self.delta_step.is_finite() || self.delta_step <= 0.0 {
            return Err(Error::config("delta_step must be finite and > 0"));
        }
        if self.grid().len() < 2 {
            return Err(Error::config(format!(
                "grid from tau_start={} step={} has fewer than 2 thresholds",
                self.tau_start, self.delta_step
            )));
        }
        Ok(())
    }

    /// Grid values in walk order. Values are snapped to 9 decimal places so
    /// repeated subtraction cannot drift off the intended thresholds, and
    /// the grid bottoms out above zero: a non-positive tau would gate
    /// nothing since entropies are non-negative.
    pub fn grid(&self) -> Vec<f64> {
        let steps = (self.tau_start / self.delta_step + 1e-9).floor() as usize;
        let mut grid: Vec<f64> = (0..=steps)
            .map(|i| round9(self.tau_start - i as f64 * self.delta_step))
            .filter(|&tau| tau > 1e-12)
            .collect();
        if self.direction == Direction::LowToHigh {
            grid.reverse();
        }
        grid
    }
}

/// Detection statistics at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStats {
    pub tau: f64,
    #[serde(rename = "wr")]
    pub watermark_ratio: f64,
    pub green_count: u64,
}

impl TauStats {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.watermark_ratio) {
            return Err(Error::input(format!(
                "watermark ratio must be in [0, 1], got {}",
                self.watermark_ratio
            )));
        }
        Ok(())
    }
}

/// Adjacent-threshold ratios `(p, w)`. A zero denominator is reported as
/// an infinity sentinel; [`navigate`] guards the stopping predicate so a
/// sentinel never counts as `w < 1`, and counts as `p > 1` only when the
/// previous green count was positive.
pub fn pw_ratios(prev: &TauStats, curr: &TauStats) -> (f64, f64) {
    let p = if curr.green_count > 0 {
        prev.green_count as f64 / curr.green_count as f64
    } else {
        f64::INFINITY
    };
    let w = if curr.watermark_ratio > 0.0 {
        prev.watermark_ratio / curr.watermark_ratio
    } else {
        f64::INFINITY
    };
    (p, w)
}

/// The stopping rule: strictly more greens lost than gained (`p > 1`)
/// while the scored share grew (`w < 1`). Both inequalities are strict.
pub fn should_stop(p: f64, w: f64) -> bool {
    p > 1.0 && w < 1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NavigatorResult {
    pub grid: Vec<f64>,
    pub stats: Vec<TauStats>,
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub tau_hat: f64,
    pub stop_index: Option<usize>,
}

/// Walks the grid, scoring each threshold, and selects `tau_hat`.
///
/// On a stop at step `i`, `tau_hat` is the grid value at `i - 1` and no
/// later thresholds are scored, so `stats`, `p`, and `w` cover exactly the
/// evaluated prefix of the grid. A scorer error aborts the walk and is
/// wrapped with the threshold that failed.
pub fn navigate(
    cfg: &NavigatorConfig,
    mut scorer: impl FnMut(f64) -> Result<TauStats>,
) -> Result<NavigatorResult> {
    cfg.validate()?;
    let grid = cfg.grid();
    let mut stats: Vec<TauStats> = Vec::with_capacity(grid.len());
    let mut ps = Vec::with_capacity(grid.len().saturating_sub(1));
    let mut ws = Vec::with_capacity(grid.len().saturating_sub(1));
    let mut stop_index = None;

    for (i, &tau) in grid.iter().enumerate() {
        let stat = scorer(tau)
            .and_then(|s| s.validate().map(|_| s))
            .map_err(|e| Error::Navigation { tau, source: Box::new(e) })?;
        stats.push(stat);
        if i == 0 {
            continue;
        }
        let prev = &stats[i - 1];
        let curr = &stats[i];
        let (p, w) = pw_ratios(prev, curr);
        ps.push(p);
        ws.push(w);
        let p_fires = if curr.green_count > 0 { p > 1.0 } else { prev.green_count > 0 };
        let w_fires = curr.watermark_ratio > 0.0 && w < 1.0;
        if p_fires && w_fires {
            stop_index = Some(i);
            break;
        }
    }

    let tau_hat = match stop_index {
        Some(i) => grid[i - 1],
        None => grid[0],
    };
    Ok(NavigatorResult { grid, stats, p: ps, w: ws, tau_hat, stop_index })
}
