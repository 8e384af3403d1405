//! Fit a bank of entropy-tagger heads: one binary classifier per threshold,
//! each predicting "next-step entropy below tau" from the prefix alone.

use lowent_wm::features::ExtractorConfig;
use lowent_wm::model::{ControlledEntropyModel, ScheduleEntry};
use lowent_wm::rng::Prng;
use lowent_wm::tagger::train::TrainConfig;
use lowent_wm::tagger::{collect_samples, predict_low};
use lowent_wm::watermark::EntropyGate;
use lowent_wm::{generate, TaggerBank, WatermarkConfig};

fn main() -> lowent_wm::Result<()> {
    // Alternating forced and open steps. The peak token at each step leaks
    // the position in the cycle, which is exactly what the hashed n-gram
    // features pick up.
    let schedule = vec![
        ScheduleEntry { target_entropy: 0.1, peak: 4 },
        ScheduleEntry { target_entropy: 2.6, peak: 12 },
        ScheduleEntry { target_entropy: 0.1, peak: 25 },
        ScheduleEntry { target_entropy: 1.1, peak: 31 },
    ];
    let model = ControlledEntropyModel::new(40, schedule)?;

    // Unbiased rollouts as training text.
    let cfg = WatermarkConfig { delta: 0.0, ..WatermarkConfig::default() };
    let mut sequences = Vec::new();
    for i in 0..30u64 {
        let mut rng = Prng::stream(i, "training-corpus");
        let prompt = [(i % 40) as u32];
        let (doc, _) = generate(&model, &prompt, &cfg, &EntropyGate::Always, 40, &mut rng)?;
        let mut seq = prompt.to_vec();
        seq.extend(doc.tokens);
        sequences.push(seq);
    }

    let extractor = ExtractorConfig::default();
    let samples = collect_samples(&model, &sequences, &extractor)?;
    println!("collected {} training rows from {} rollouts", samples.len(), sequences.len());

    let grid = [1.5, 0.9, 0.3];
    let train_cfg = TrainConfig { epochs: 40, ..TrainConfig::default() };
    let bank = TaggerBank::train(&samples, &grid, extractor, &train_cfg)?;

    println!("\n  tau   train_acc  val_acc  best_epoch");
    for head in &bank.heads {
        println!(
            "  {:<5} {:<10.3} {:<8.3} {}",
            head.tau,
            head.metadata.train_accuracy,
            head.metadata.val_accuracy,
            head.metadata.best_epoch
        );
    }

    // Query the bank the way a detector would: is the step after this
    // prefix a forced move at tau = 0.9?
    let prefix = &sequences[0][..6];
    let (low, p) = predict_low(&bank, prefix, 0.9)?;
    println!("\nprefix {:?}: predicted low-entropy = {low} (p = {p:.3})", prefix);

    // Banks serialize with exact weights; a reloaded bank answers
    // identically.
    let json = bank.to_json()?;
    let reloaded = TaggerBank::from_json(&json)?;
    assert_eq!(predict_low(&reloaded, prefix, 0.9)?, (low, p));
    println!("bank round-trips through JSON ({} bytes)", json.len());
    Ok(())
}
