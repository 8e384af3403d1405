//! The per-document threshold walk, on transparent numbers.
//!
//! Detection quality depends on the entropy threshold, and the best value
//! differs per document. The navigator walks a tau grid and compares each
//! threshold to the previous one: p is the ratio of green counts, w the
//! ratio of watermark ratios. It stops where loosening the gate grew the
//! scored set (w < 1) while losing green hits (p > 1) and keeps the
//! threshold before that step.
//!
//! Green counts can only fall between thresholds when the per-threshold
//! classifiers disagree, which is exactly the tagger-bank situation: each
//! head is trained independently, so the admitted sets are not nested.
//! `detect_ie_traced` runs this walk against a bank (see the ie_pipeline
//! example); here the per-threshold statistics are served from a table so
//! the rule itself is easy to follow.

use lowent_wm::{navigate, Direction, NavigatorConfig, TauStats};

fn main() -> lowent_wm::Result<()> {
    // One 500-token document, already scored at four thresholds by four
    // independent tagger heads.
    let total = 500.0;
    let scored = [60u64, 110, 300, 480];
    let greens = [48u64, 80, 150, 120];

    let cfg = NavigatorConfig {
        tau_start: 1.2,
        delta_step: 0.3,
        direction: Direction::HighToLow,
    };
    println!("grid: {:?}\n", cfg.grid());

    let mut calls = 0usize;
    let result = navigate(&cfg, |tau| {
        let i = calls;
        calls += 1;
        Ok(TauStats {
            tau,
            watermark_ratio: scored[i] as f64 / total,
            green_count: greens[i],
        })
    })?;

    println!("  tau    scored  greens  p       w");
    for (i, s) in result.stats.iter().enumerate() {
        let (p, w) = if i == 0 {
            ("       ".into(), "       ".into())
        } else {
            (format!("{:<7.3} ", result.p[i - 1]), format!("{:<7.3}", result.w[i - 1]))
        };
        let mark = if result.stop_index == Some(i) { "  <- rule fires" } else { "" };
        println!(
            "  {:<6} {:<7} {:<7} {p}{w}{mark}",
            s.tau,
            (s.watermark_ratio * total) as u64,
            s.green_count
        );
    }

    // Loosening 0.6 -> 0.3 admitted 180 more positions (w = 0.625) yet
    // green hits fell from 150 to 120 (p = 1.25): the extra positions are
    // unbiased noise and the 0.3 head dropped real hits. Stop and keep 0.6.
    println!("\ntau_hat = {}", result.tau_hat);
    assert_eq!(result.tau_hat, 0.6);

    // If no step ever trades coverage against green hits, the walk runs
    // out and the starting threshold stands.
    let mut tame = [48u64, 80, 150, 170].into_iter();
    let quiet = navigate(&cfg, |tau| {
        Ok(TauStats {
            tau,
            watermark_ratio: 0.5,
            green_count: tame.next().unwrap(),
        })
    })?;
    println!("monotone walk never fires: tau_hat = {}", quiet.tau_hat);
    Ok(())
}
