//! Model-free detection: a tagger bank stands in for the generator at
//! detection time, so the detector needs no logits, only the trained heads.

use lowent_wm::detect::detect_ie_traced;
use lowent_wm::features::ExtractorConfig;
use lowent_wm::model::{ControlledEntropyModel, ScheduleEntry};
use lowent_wm::rng::Prng;
use lowent_wm::tagger::{collect_samples, train::TrainConfig};
use lowent_wm::watermark::EntropyGate;
use lowent_wm::{
    generate, LogitProvider, NavigatorConfig, Scheme, TaggerBank, WatermarkConfig,
};

fn main() -> lowent_wm::Result<()> {
    let schedule = vec![
        ScheduleEntry { target_entropy: 0.1, peak: 3 },
        ScheduleEntry { target_entropy: 2.9, peak: 14 },
        ScheduleEntry { target_entropy: 0.1, peak: 27 },
        ScheduleEntry { target_entropy: 2.9, peak: 8 },
    ];
    let model = ControlledEntropyModel::new(40, schedule)?;
    let nav_cfg = NavigatorConfig::default();

    // Train the bank over the full navigator grid so detection can walk it.
    let plain = WatermarkConfig { delta: 0.0, ..WatermarkConfig::default() };
    let mut sequences = Vec::new();
    for i in 0..30u64 {
        let mut rng = Prng::stream(i, "training-corpus");
        let prompt = [(i % 40) as u32];
        let (doc, _) = generate(&model, &prompt, &plain, &EntropyGate::Always, 40, &mut rng)?;
        let mut seq = prompt.to_vec();
        seq.extend(doc.tokens);
        sequences.push(seq);
    }
    let extractor = ExtractorConfig::default();
    let samples = collect_samples(&model, &sequences, &extractor)?;
    let train_cfg = TrainConfig { epochs: 40, ..TrainConfig::default() };
    let bank = TaggerBank::train(&samples, &nav_cfg.grid(), extractor, &train_cfg)?;
    println!("bank covers taus {:?} ({} parameters)", bank.taus(), bank.param_count());

    // Generate with the tagger gate: the generator itself consults the bank
    // instead of its own entropy.
    let cfg = WatermarkConfig {
        scheme: Scheme::Ie,
        tau_gen: 0.6,
        ..WatermarkConfig::default()
    };
    let gate = EntropyGate::Tagger { bank: &bank, tau: cfg.tau_gen };
    let prompt = [3u32];
    let mut rng = Prng::stream(900, "generation");
    let (doc, trace) = generate(&model, &prompt, &cfg, &gate, 300, &mut rng)?;
    let biased = trace.steps.iter().filter(|s| s.watermarked).count();
    println!("generated 300 tokens, tagger admitted {biased} for biasing");

    // Detection: tagger-gated scoring plus a threshold walk, no model.
    let (report, nav) = detect_ie_traced(
        &doc.tokens,
        &cfg,
        model.vocab_size(),
        &bank,
        &nav_cfg,
        Some(prompt[0]),
    )?;
    println!("\nnavigator walked {:?}", nav.grid);
    println!("chose tau_hat = {}", nav.tau_hat);
    println!(
        "z = {:.2}  scored {} of {} tokens  verdict = {}",
        report.z, report.scored_tokens, report.total_tokens, report.verdict
    );
    Ok(())
}
