//! Subcommand drivers.
//!
//! Each command resolves its configuration (flags > config file > built-in
//! defaults), runs the library call per input record, and writes outputs
//! atomically with a manifest alongside. A malformed record becomes an
//! error record in the output stream and the batch continues; only setup
//! problems (missing files, invalid config) abort a command.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use super::io::{atomic_write, read_lines, write_jsonl, ConfigOverlay};
use super::manifest::RunManifest;
use super::{Cli, Command};
use crate::detect::{
    detect_ewd, detect_full, detect_ie_traced, detect_selective, DetectionReport, EntropySource,
};
use crate::error::{Error, Result};
use crate::eval::attack::AttackSampler;
use crate::eval::calibrate::{type1_calibration, DEFAULT_CALIBRATION_VOCAB};
use crate::eval::metrics::{auroc, ScoreSet};
use crate::eval::substitution_attack;
use crate::eval::sweep::{sweep, SweepPlan};
use crate::features::ExtractorConfig;
use crate::model::{read_corpus, LogitProvider, Model, TokenId};
use crate::navigator::{navigate, Direction, NavigatorConfig, NavigatorResult, TauStats};
use crate::rng::Prng;
use crate::tagger::train::TrainConfig;
use crate::tagger::{collect_samples, TaggerBank};
use crate::watermark::{generate, EntropyGate, Scheme, TraceStep, WatermarkConfig};

/// Watermark parameters shared by every subcommand. Unset flags fall back
/// to the config file, then to the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct WatermarkArgs {
    /// Green-list fraction in (0, 1).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Logit bias added to green tokens.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Secret watermark key.
    #[arg(long)]
    pub key: Option<u64>,
    /// Verdict threshold on the detection z-statistic.
    #[arg(long)]
    pub z_threshold: Option<f64>,
    /// Entropy-gate threshold in nats for the sweet and ie schemes.
    #[arg(long)]
    pub tau_gen: Option<f64>,
}

fn resolve_config(
    scheme: Option<Scheme>,
    wm: &WatermarkArgs,
    overlay: &ConfigOverlay,
) -> Result<WatermarkConfig> {
    let mut cfg = WatermarkConfig::default();
    overlay.apply(&mut cfg);
    if let Some(s) = scheme {
        cfg.scheme = s;
    }
    if let Some(v) = wm.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = wm.delta {
        cfg.delta = v;
    }
    if let Some(v) = wm.key {
        cfg.key = v;
    }
    if let Some(v) = wm.z_threshold {
        cfg.z_threshold = v;
    }
    if let Some(v) = wm.tau_gen {
        cfg.tau_gen = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_seed(flag: Option<u64>, overlay: &ConfigOverlay) -> u64 {
    flag.or(overlay.seed).unwrap_or(42)
}

fn resolve_vocab(flag: Option<usize>, model: Option<&Model>) -> Result<usize> {
    match (flag, model) {
        (Some(v), Some(m)) if m.vocab_size() != v => Err(Error::config(format!(
            "--vocab-size {v} disagrees with the model's {}",
            m.vocab_size()
        ))),
        (Some(v), _) => Ok(v),
        (None, Some(m)) => Ok(m.vocab_size()),
        (None, None) => Err(Error::config(
            "need --vocab-size or --model to size the vocabulary",
        )),
    }
}

fn config_json(cfg: &WatermarkConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn parse_record(line: &str) -> Result<Value> {
    serde_json::from_str(line).map_err(|e| Error::format(format!("bad JSON record: {e}")))
}

fn token_value(v: &Value, field: &str) -> Result<TokenId> {
    v.as_u64()
        .and_then(|u| TokenId::try_from(u).ok())
        .ok_or_else(|| Error::format(format!("{field:?} entries must be token ids")))
}

fn token_array(record: &Value, field: &str) -> Result<Vec<TokenId>> {
    let arr = record
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| Error::format(format!("record has no {field:?} array")))?;
    arr.iter().map(|v| token_value(v, field)).collect()
}

fn optional_token_array(record: &Value, field: &str) -> Result<Option<Vec<TokenId>>> {
    match record.get(field) {
        Some(_) => token_array(record, field).map(Some),
        None => Ok(None),
    }
}

fn optional_f64_array(record: &Value, field: &str) -> Result<Option<Vec<f64>>> {
    let Some(v) = record.get(field) else {
        return Ok(None);
    };
    let arr = v
        .as_array()
        .ok_or_else(|| Error::format(format!("{field:?} must be an array of numbers")))?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::format(format!("{field:?} entries must be numbers")))
        })
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

/// Anchor the first suspect token hashes against: flag, else the record's
/// "anchor", else its last prompt token, else token 0.
fn resolve_anchor(flag: Option<TokenId>, record: &Value) -> Result<TokenId> {
    if let Some(a) = flag {
        return Ok(a);
    }
    if let Some(v) = record.get("anchor") {
        return token_value(v, "anchor");
    }
    if let Some(last) = record.get("prompt").and_then(Value::as_array).and_then(|p| p.last()) {
        return token_value(last, "prompt");
    }
    Ok(0)
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    record: usize,
    error: &'a str,
}

fn error_line(idx: usize, err: &Error) -> String {
    let msg = err.to_string();
    serde_json::to_string(&ErrorRecord { record: idx, error: &msg })
        .unwrap_or_else(|_| format!("{{\"record\":{idx},\"error\":\"unprintable\"}}"))
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let overlay = ConfigOverlay::resolve(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(args) => cmd_generate(args, &overlay),
        Command::Detect(args) => cmd_detect(args, &overlay),
        Command::TrainTagger(args) => cmd_train_tagger(args, &overlay),
        Command::Navigate(args) => cmd_navigate(args, &overlay),
        Command::Calibrate(args) => cmd_calibrate(args, &overlay),
        Command::Attack(args) => cmd_attack(args, &overlay),
        Command::Sweep(args) => cmd_sweep(args, &overlay),
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Prompt file: JSONL records with "prompt" (token ids) or "text".
    #[arg(long)]
    pub prompts: PathBuf,
    /// Output JSONL of {prompt, tokens, text, trace} records.
    #[arg(long)]
    pub out: PathBuf,
    /// Generation scheme: kgw, sweet or ie.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Tagger bank file, required for --scheme ie.
    #[arg(long)]
    pub tagger_bank: Option<PathBuf>,
    /// Tokens to generate per prompt.
    #[arg(long, default_value_t = 200)]
    pub max_tokens: usize,
    /// Run seed; record i draws from sub-stream "generation/i".
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub watermark: WatermarkArgs,
}

#[derive(Serialize)]
struct GenerationRecord {
    prompt: Vec<TokenId>,
    tokens: Vec<TokenId>,
    text: String,
    trace: Vec<TraceStep>,
}

pub fn cmd_generate(args: &GenerateArgs, overlay: &ConfigOverlay) -> Result<()> {
    let scheme = match args.scheme.as_deref() {
        Some("ewd") => {
            return Err(Error::config(
                "ewd is a detection-side scheme (entropy-weighted scoring of kgw text); \
                 generate with --scheme kgw and detect with --scheme ewd",
            ))
        }
        Some(s) => Some(s.parse::<Scheme>()?),
        None => None,
    };
    let cfg = resolve_config(scheme, &args.watermark, overlay)?;
    let seed = resolve_seed(args.seed, overlay);
    let model = Model::load(&args.model)?;
    let bank = args.tagger_bank.as_deref().map(TaggerBank::load).transpose()?;
    let gate = EntropyGate::for_config(&cfg, bank.as_ref())?;

    let lines = read_lines(&args.prompts)?;
    let mut out_lines = Vec::with_capacity(lines.len());
    let mut failed = 0usize;
    for (i, line) in lines.iter().enumerate() {
        match generate_record(&model, &cfg, &gate, args.max_tokens, seed, i, line) {
            Ok(json) => out_lines.push(json),
            Err(e) => {
                failed += 1;
                out_lines.push(error_line(i, &e));
            }
        }
    }
    write_jsonl(&args.out, &out_lines)?;

    let mut manifest = RunManifest::begin("generate", config_json(&cfg), seed);
    manifest.input(&args.model);
    manifest.input(&args.prompts);
    if let Some(p) = args.tagger_bank.as_deref() {
        manifest.input(p);
    }
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    println!(
        "generated {} records ({failed} failed) -> {}",
        out_lines.len() - failed,
        args.out.display()
    );
    Ok(())
}

fn generate_record(
    model: &Model,
    cfg: &WatermarkConfig,
    gate: &EntropyGate<'_>,
    max_tokens: usize,
    seed: u64,
    idx: usize,
    line: &str,
) -> Result<String> {
    let record = parse_record(line)?;
    let prompt = prompt_tokens(&record, model)?;
    let mut rng = Prng::stream(seed, &format!("generation/{idx}"));
    let (seq, trace) = generate(model, &prompt, cfg, gate, max_tokens, &mut rng)?;
    let text = render_text(model, &seq.tokens)?;
    let out = GenerationRecord { prompt, tokens: seq.tokens, text, trace: trace.steps };
    Ok(serde_json::to_string(&out)?)
}

fn prompt_tokens(record: &Value, model: &Model) -> Result<Vec<TokenId>> {
    if record.get("prompt").is_some() {
        return token_array(record, "prompt");
    }
    if let Some(text) = record.get("text").and_then(Value::as_str) {
        let vocab = model.vocabulary().ok_or_else(|| {
            Error::input("model has no tokenizer; supply prompts as token ids")
        })?;
        let ids = vocab.tokenize(text)?;
        if ids.is_empty() {
            return Err(Error::input("prompt text tokenized to nothing"));
        }
        return Ok(ids);
    }
    Err(Error::format(
        "prompt record needs a \"prompt\" id array or a \"text\" string",
    ))
}

fn render_text(model: &Model, tokens: &[TokenId]) -> Result<String> {
    match model.vocabulary() {
        Some(v) => v.translate(tokens),
        None => Ok(tokens
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")),
    }
}

/// Detection-side scheme. Extends the generation schemes with ewd, which
/// scores kgw-generated text with entropy weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorKind {
    /// Score every position.
    Kgw,
    /// Score positions whose oracle (or supplied) entropy exceeds tau.
    Sweet,
    /// Weight every position by its entropy.
    Ewd,
    /// Score positions a tagger bank marks as high-entropy.
    Ie,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Input JSONL: records with "tokens" plus optional "prompt", "anchor",
    /// "entropies" and boolean "label".
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the report stream to this JSONL file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Detector: kgw, sweet, ewd or ie.
    #[arg(long, value_enum, default_value_t = DetectorKind::Kgw)]
    pub scheme: DetectorKind,
    /// Vocabulary size the suspect ids live in (or derive it from --model).
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Reference model for oracle entropies and the vocabulary size.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Tagger bank, required for the ie detector.
    #[arg(long)]
    pub tagger_bank: Option<PathBuf>,
    /// Detection entropy threshold (defaults to tau_gen).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Search the detection threshold per document and report tau_hat.
    #[arg(long)]
    pub navigate: bool,
    /// Anchor the first suspect token hashes against. Default: the record's
    /// "anchor", else its last prompt token, else token 0.
    #[arg(long)]
    pub anchor: Option<TokenId>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub watermark: WatermarkArgs,
}

pub fn cmd_detect(args: &DetectArgs, overlay: &ConfigOverlay) -> Result<()> {
    let cfg = resolve_config(None, &args.watermark, overlay)?;
    let seed = resolve_seed(args.seed, overlay);
    let model = args.model.as_deref().map(Model::load).transpose()?;
    let bank = args.tagger_bank.as_deref().map(TaggerBank::load).transpose()?;
    if args.scheme == DetectorKind::Ie && bank.is_none() {
        return Err(Error::config("the ie detector needs --tagger-bank"));
    }
    let vocab_size = resolve_vocab(args.vocab_size, model.as_ref())?;
    let nav_cfg = NavigatorConfig::default();

    let lines = read_lines(&args.input)?;
    let mut out_lines = Vec::with_capacity(lines.len());
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut failed = 0usize;
    for (i, line) in lines.iter().enumerate() {
        let outcome = parse_record(line).and_then(|record| {
            let report = detect_record(
                args,
                &cfg,
                vocab_size,
                model.as_ref(),
                bank.as_ref(),
                &nav_cfg,
                &record,
            )?;
            Ok((report, record.get("label").and_then(Value::as_bool)))
        });
        match outcome {
            Ok((report, label)) => {
                match label {
                    Some(true) => positives.push(report.z),
                    Some(false) => negatives.push(report.z),
                    None => {}
                }
                out_lines.push(serde_json::to_string(&report)?);
            }
            Err(e) => {
                failed += 1;
                out_lines.push(error_line(i, &e));
            }
        }
    }
    for line in &out_lines {
        println!("{line}");
    }
    let scored = out_lines.len() - failed;
    if !positives.is_empty() && !negatives.is_empty() {
        let set = ScoreSet::new(positives, negatives)?;
        println!(
            "summary: docs={scored} failed={failed} watermarked={} clean={} auroc={:.4}",
            set.positives.len(),
            set.negatives.len(),
            auroc(&set)?
        );
    } else {
        println!("summary: docs={scored} failed={failed}");
    }
    if let Some(out) = args.out.as_deref() {
        write_jsonl(out, &out_lines)?;
        let mut manifest = RunManifest::begin("detect", config_json(&cfg), seed);
        manifest.input(&args.input);
        if let Some(p) = args.model.as_deref() {
            manifest.input(p);
        }
        if let Some(p) = args.tagger_bank.as_deref() {
            manifest.input(p);
        }
        manifest.output(out);
        manifest.finish(out)?;
    }
    Ok(())
}

fn detect_record(
    args: &DetectArgs,
    cfg: &WatermarkConfig,
    vocab_size: usize,
    model: Option<&Model>,
    bank: Option<&TaggerBank>,
    nav_cfg: &NavigatorConfig,
    record: &Value,
) -> Result<DetectionReport> {
    let tokens = token_array(record, "tokens")?;
    let anchor = Some(resolve_anchor(args.anchor, record)?);
    let tau = args.tau.unwrap_or(cfg.tau_gen);
    match args.scheme {
        DetectorKind::Kgw => detect_full(&tokens, cfg, vocab_size, anchor),
        DetectorKind::Ie => {
            let bank = bank.expect("presence checked before the batch");
            if args.navigate {
                detect_ie_traced(&tokens, cfg, vocab_size, bank, nav_cfg, anchor).map(|(r, _)| r)
            } else {
                let source = EntropySource::Tagger { bank };
                detect_selective(&tokens, cfg, vocab_size, tau, &source, anchor)
            }
        }
        DetectorKind::Sweet | DetectorKind::Ewd => {
            let prompt = optional_token_array(record, "prompt")?.unwrap_or_default();
            let entropies = optional_f64_array(record, "entropies")?;
            let source = match (&entropies, model) {
                (Some(e), _) => EntropySource::External(e),
                (None, Some(m)) => EntropySource::Oracle { model: m, context: &prompt },
                (None, None) => {
                    return Err(Error::config(
                        "sweet/ewd detection needs --model for oracle entropies \
                         or an \"entropies\" array in the record",
                    ))
                }
            };
            if args.scheme == DetectorKind::Ewd {
                detect_ewd(&tokens, cfg, vocab_size, &source, anchor)
            } else if args.navigate {
                navigate_selective(&tokens, cfg, vocab_size, &source, anchor, nav_cfg)
                    .map(|(r, _)| r)
            } else {
                detect_selective(&tokens, cfg, vocab_size, tau, &source, anchor)
            }
        }
    }
}

/// Threshold search over any entropy source: walks the grid with selective
/// scoring, then reports the pass at the selected threshold.
fn navigate_selective(
    tokens: &[TokenId],
    cfg: &WatermarkConfig,
    vocab_size: usize,
    source: &EntropySource<'_>,
    anchor: Option<TokenId>,
    nav_cfg: &NavigatorConfig,
) -> Result<(DetectionReport, NavigatorResult)> {
    let nav = navigate(nav_cfg, |tau| {
        let r = detect_selective(tokens, cfg, vocab_size, tau, source, anchor)?;
        Ok(TauStats { tau, watermark_ratio: r.watermark_ratio, green_count: r.green_count })
    })?;
    let mut report = detect_selective(tokens, cfg, vocab_size, nav.tau_hat, source, anchor)?;
    report.tau_hat = Some(nav.tau_hat);
    Ok((report, nav))
}

#[derive(Debug, Args)]
pub struct TrainTaggerArgs {
    /// Reference model; must carry a tokenizer for text corpora.
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus: plain text (one document per line) or JSONL with "text".
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output bank file.
    #[arg(long)]
    pub out: PathBuf,
    /// Entropy thresholds; one classifier head per value.
    #[arg(long, value_delimiter = ',', default_value = "1.5,1.2,0.9,0.6,0.3")]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 128)]
    pub hidden_dim: usize,
    /// Fraction of samples held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Feature dimension of the hashed n-gram extractor.
    #[arg(long, default_value_t = 256)]
    pub dimension: usize,
    /// Also write the extracted {features, entropy} rows to this JSONL file.
    #[arg(long)]
    pub dataset_cache: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct CacheRow<'a> {
    features: &'a [f64],
    entropy: f64,
}

pub fn cmd_train_tagger(args: &TrainTaggerArgs, overlay: &ConfigOverlay) -> Result<()> {
    let seed = resolve_seed(args.seed, overlay);
    let model = Model::load(&args.model)?;
    let vocab = model.vocabulary().ok_or_else(|| {
        Error::config("model has no tokenizer; train the tagger with an n-gram model")
    })?;
    let docs = read_corpus(&args.corpus)?;
    let mut sequences = Vec::with_capacity(docs.len());
    for doc in &docs {
        let ids = vocab.tokenize(doc)?;
        if ids.len() >= 2 {
            sequences.push(ids);
        }
    }
    if sequences.is_empty() {
        return Err(Error::input("corpus has no documents of at least 2 tokens"));
    }
    let extractor = ExtractorConfig { dimension: args.dimension, ..ExtractorConfig::default() };
    let samples = collect_samples(&model, &sequences, &extractor)?;
    if let Some(cache) = args.dataset_cache.as_deref() {
        let mut lines = Vec::with_capacity(samples.len());
        for s in &samples {
            lines.push(serde_json::to_string(&CacheRow {
                features: &s.features,
                entropy: s.entropy,
            })?);
        }
        write_jsonl(cache, &lines)?;
    }
    let train_cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        weight_decay: args.weight_decay,
        hidden_dim: args.hidden_dim,
        val_fraction: args.val_fraction,
        seed,
    };
    println!(
        "training {} heads on {} samples: epochs={} batch_size={} learning_rate={} \
         weight_decay={} hidden_dim={} val_fraction={} seed={}",
        args.grid.len(),
        samples.len(),
        train_cfg.epochs,
        train_cfg.batch_size,
        train_cfg.learning_rate,
        train_cfg.weight_decay,
        train_cfg.hidden_dim,
        train_cfg.val_fraction,
        seed
    );
    let bank = TaggerBank::train(&samples, &args.grid, extractor, &train_cfg)?;
    bank.save(&args.out)?;
    println!("tau      train_acc  val_acc  best_epoch");
    for head in &bank.heads {
        println!(
            "{:<8} {:<10.4} {:<8.4} {}",
            head.tau, head.metadata.train_accuracy, head.metadata.val_accuracy,
            head.metadata.best_epoch
        );
    }

    let mut manifest = RunManifest::begin(
        "train-tagger",
        serde_json::json!({
            "grid": args.grid,
            "epochs": train_cfg.epochs,
            "batch_size": train_cfg.batch_size,
            "learning_rate": train_cfg.learning_rate,
            "weight_decay": train_cfg.weight_decay,
            "hidden_dim": train_cfg.hidden_dim,
            "val_fraction": train_cfg.val_fraction,
            "dimension": args.dimension,
        }),
        seed,
    );
    manifest.input(&args.model);
    manifest.input(&args.corpus);
    manifest.output(&args.out);
    if let Some(cache) = args.dataset_cache.as_deref() {
        manifest.output(cache);
    }
    manifest.finish(&args.out)?;
    println!("saved bank with {} heads -> {}", bank.heads.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct NavigateArgs {
    /// Input JSONL token documents.
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the trace stream to this JSONL file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tagger bank providing the entropy gate.
    #[arg(long)]
    pub tagger_bank: Option<PathBuf>,
    /// Reference model for oracle entropies (alternative to a bank).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// First threshold visited.
    #[arg(long, default_value_t = 1.5)]
    pub tau_start: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.3)]
    pub delta_step: f64,
    /// Walk order: high-to-low or low-to-high.
    #[arg(long, default_value = "high-to-low")]
    pub direction: String,
    /// Anchor the first suspect token hashes against.
    #[arg(long)]
    pub anchor: Option<TokenId>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub watermark: WatermarkArgs,
}

#[derive(Serialize)]
struct NavigationRecord {
    record: usize,
    tau_hat: f64,
    result: NavigatorResult,
    report: DetectionReport,
}

pub fn cmd_navigate(args: &NavigateArgs, overlay: &ConfigOverlay) -> Result<()> {
    let cfg = resolve_config(None, &args.watermark, overlay)?;
    let seed = resolve_seed(args.seed, overlay);
    let direction: Direction = args.direction.parse()?;
    let nav_cfg = NavigatorConfig {
        tau_start: args.tau_start,
        delta_step: args.delta_step,
        direction,
    };
    nav_cfg.validate()?;
    let model = args.model.as_deref().map(Model::load).transpose()?;
    let bank = args.tagger_bank.as_deref().map(TaggerBank::load).transpose()?;
    let vocab_size = resolve_vocab(args.vocab_size, model.as_ref())?;

    let lines = read_lines(&args.input)?;
    let mut out_lines = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let outcome = parse_record(line).and_then(|record| {
            navigate_record(args, &cfg, vocab_size, model.as_ref(), bank.as_ref(), &nav_cfg, i, &record)
        });
        match outcome {
            Ok(json) => out_lines.push(json),
            Err(e) => out_lines.push(error_line(i, &e)),
        }
    }
    for line in &out_lines {
        println!("{line}");
    }
    if let Some(out) = args.out.as_deref() {
        write_jsonl(out, &out_lines)?;
        let mut manifest = RunManifest::begin("navigate", config_json(&cfg), seed);
        manifest.input(&args.input);
        if let Some(p) = args.model.as_deref() {
            manifest.input(p);
        }
        if let Some(p) = args.tagger_bank.as_deref() {
            manifest.input(p);
        }
        manifest.output(out);
        manifest.finish(out)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn navigate_record(
    args: &NavigateArgs,
    cfg: &WatermarkConfig,
    vocab_size: usize,
    model: Option<&Model>,
    bank: Option<&TaggerBank>,
    nav_cfg: &NavigatorConfig,
    idx: usize,
    record: &Value,
) -> Result<String> {
    let tokens = token_array(record, "tokens")?;
    let anchor = Some(resolve_anchor(args.anchor, record)?);
    let prompt = optional_token_array(record, "prompt")?.unwrap_or_default();
    let entropies = optional_f64_array(record, "entropies")?;
    let (report, nav) = if let Some(bank) = bank {
        detect_ie_traced(&tokens, cfg, vocab_size, bank, nav_cfg, anchor)?
    } else {
        let source = match (&entropies, model) {
            (Some(e), _) => EntropySource::External(e),
            (None, Some(m)) => EntropySource::Oracle { model: m, context: &prompt },
            (None, None) => {
                return Err(Error::config(
                    "navigation needs --tagger-bank, --model, or per-record \"entropies\"",
                ))
            }
        };
        navigate_selective(&tokens, cfg, vocab_size, &source, anchor, nav_cfg)?
    };
    let out = NavigationRecord { record: idx, tau_hat: nav.tau_hat, result: nav, report };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Null documents to draw.
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Tokens per document.
    #[arg(long, default_value_t = 200)]
    pub length: usize,
    /// Verdict threshold; shorthand for --z-threshold.
    #[arg(long)]
    pub z: Option<f64>,
    /// Vocabulary size of the null documents.
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_VOCAB)]
    pub vocab_size: usize,
    /// Write the report JSON here too.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub watermark: WatermarkArgs,
}

pub fn cmd_calibrate(args: &CalibrateArgs, overlay: &ConfigOverlay) -> Result<()> {
    let mut cfg = resolve_config(None, &args.watermark, overlay)?;
    if let Some(z) = args.z {
        cfg.z_threshold = z;
    }
    let seed = resolve_seed(args.seed, overlay);
    let report = type1_calibration(args.trials, args.length, &cfg, args.vocab_size, seed)?;
    println!(
        "false-positive rate at z > {}: {:.5} (trials={}, length={}, gamma={}, vocab={})",
        report.z_threshold, report.fpr, report.trials, report.length, report.gamma,
        report.vocab_size
    );
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(out) = args.out.as_deref() {
        atomic_write(out, json.as_bytes())?;
        let mut manifest = RunManifest::begin("calibrate", config_json(&cfg), seed);
        manifest.output(out);
        manifest.finish(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    /// Draw replacements from the reference model's conditional distribution.
    Model,
    /// Draw replacements uniformly from the rest of the vocabulary.
    Uniform,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Input JSONL with "tokens" records.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL; untouched records are echoed byte-for-byte.
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of positions to replace, in [0, 1].
    #[arg(long)]
    pub level: f64,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Reference model (required for --sampler model).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Replacement sampler.
    #[arg(long, value_enum, default_value_t = SamplerKind::Model)]
    pub sampler: SamplerKind,
    /// Run seed; record i draws from sub-stream "attack/i".
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_attack(args: &AttackArgs, overlay: &ConfigOverlay) -> Result<()> {
    let seed = resolve_seed(args.seed, overlay);
    let model = args.model.as_deref().map(Model::load).transpose()?;
    let vocab_size = resolve_vocab(args.vocab_size, model.as_ref())?;
    let sampler = match args.sampler {
        SamplerKind::Uniform => AttackSampler::Uniform,
        SamplerKind::Model => {
            let m = model.as_ref().ok_or_else(|| {
                Error::config("--sampler model needs --model; use --sampler uniform otherwise")
            })?;
            AttackSampler::Model(m)
        }
    };

    let lines = read_lines(&args.input)?;
    let mut out_lines = Vec::with_capacity(lines.len());
    let mut touched = 0usize;
    let mut failed = 0usize;
    for (i, line) in lines.iter().enumerate() {
        let outcome = parse_record(line).and_then(|mut record| {
            let tokens = token_array(&record, "tokens")?;
            let mut rng = Prng::stream(seed, &format!("attack/{i}"));
            let attacked = substitution_attack(&tokens, args.level, vocab_size, &sampler, &mut rng)?;
            if attacked == tokens {
                Ok((line.clone(), false))
            } else {
                record["tokens"] = serde_json::json!(attacked);
                Ok((serde_json::to_string(&record)?, true))
            }
        });
        match outcome {
            Ok((json, changed)) => {
                touched += usize::from(changed);
                out_lines.push(json);
            }
            Err(e) => {
                failed += 1;
                out_lines.push(error_line(i, &e));
            }
        }
    }
    write_jsonl(&args.out, &out_lines)?;

    let mut manifest = RunManifest::begin(
        "attack",
        serde_json::json!({"level": args.level, "vocab_size": vocab_size}),
        seed,
    );
    manifest.input(&args.input);
    if let Some(p) = args.model.as_deref() {
        manifest.input(p);
    }
    manifest.output(&args.out);
    manifest.finish(&args.out)?;
    println!(
        "rewrote {touched} of {} records at level {} ({failed} failed) -> {}",
        out_lines.len(),
        args.level,
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Tagger bank (needed when the plan includes the ie scheme).
    #[arg(long)]
    pub tagger_bank: Option<PathBuf>,
    /// Schemes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "kgw,sweet")]
    pub schemes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub deltas: Vec<f64>,
    /// Detection thresholds for the gated schemes.
    #[arg(long, value_delimiter = ',', default_value = "0.6")]
    pub taus: Vec<f64>,
    /// Also run a navigator-enabled twin of every sweet/ie cell.
    #[arg(long)]
    pub navigator_ablation: bool,
    #[arg(long, default_value_t = 100)]
    pub n_docs: usize,
    #[arg(long, default_value_t = 100)]
    pub doc_len: usize,
    /// CSV output path; a JSON mirror lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the JSON mirror path.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub watermark: WatermarkArgs,
}

pub fn cmd_sweep(args: &SweepArgs, overlay: &ConfigOverlay) -> Result<()> {
    let base = resolve_config(None, &args.watermark, overlay)?;
    let seed = resolve_seed(args.seed, overlay);
    let schemes = args
        .schemes
        .iter()
        .map(|s| s.parse::<Scheme>())
        .collect::<Result<Vec<_>>>()?;
    let model = Model::load(&args.model)?;
    let bank = args.tagger_bank.as_deref().map(TaggerBank::load).transpose()?;
    let plan = SweepPlan {
        schemes,
        gammas: args.gammas.clone(),
        deltas: args.deltas.clone(),
        taus: args.taus.clone(),
        navigator_ablation: args.navigator_ablation,
        n_docs: args.n_docs,
        doc_len: args.doc_len,
        seed,
    };
    let table = sweep(&model, bank.as_ref(), &base, &plan)?;
    let csv = table.to_csv();
    print!("{csv}");
    atomic_write(&args.out, csv.as_bytes())?;
    let json_path = args
        .json_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("json"));
    atomic_write(&json_path, table.to_json()?.as_bytes())?;

    let mut manifest = RunManifest::begin(
        "sweep",
        serde_json::json!({"base": base, "plan": plan}),
        seed,
    );
    manifest.input(&args.model);
    if let Some(p) = args.tagger_bank.as_deref() {
        manifest.input(p);
    }
    manifest.output(&args.out);
    manifest.output(&json_path);
    manifest.finish(&args.out)?;
    println!(
        "swept {} cells -> {} and {}",
        table.rows.len(),
        args.out.display(),
        json_path.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LogitProvider, ScheduleEntry};

    fn overlay(text: &str) -> ConfigOverlay {
        ConfigOverlay::parse(text).unwrap()
    }

    #[test]
    fn flags_beat_config_file_values() {
        let overlay = overlay("gamma = 0.25\ndelta = 1.0\n");
        let wm = WatermarkArgs { gamma: Some(0.4), ..WatermarkArgs::default() };
        let cfg = resolve_config(None, &wm, &overlay).unwrap();
        assert_eq!(cfg.gamma, 0.4);
        assert_eq!(cfg.delta, 1.0);
        assert_eq!(cfg.key, WatermarkConfig::default().key);
    }

    #[test]
    fn seed_resolution_prefers_flag_then_file_then_default() {
        let with_seed = overlay("seed = 9\n");
        assert_eq!(resolve_seed(Some(3), &with_seed), 3);
        assert_eq!(resolve_seed(None, &with_seed), 9);
        assert_eq!(resolve_seed(None, &ConfigOverlay::default()), 42);
    }

    #[test]
    fn anchor_resolution_order() {
        let record: Value =
            serde_json::from_str("{\"anchor\": 7, \"prompt\": [1, 2, 3]}").unwrap();
        assert_eq!(resolve_anchor(Some(5), &record).unwrap(), 5);
        assert_eq!(resolve_anchor(None, &record).unwrap(), 7);
        let no_anchor: Value = serde_json::from_str("{\"prompt\": [1, 2, 3]}").unwrap();
        assert_eq!(resolve_anchor(None, &no_anchor).unwrap(), 3);
        let bare: Value = serde_json::from_str("{\"tokens\": [4]}").unwrap();
        assert_eq!(resolve_anchor(None, &bare).unwrap(), 0);
    }

    #[test]
    fn vocab_resolution_flags_and_model_must_agree() {
        let model = Model::Controlled(
            crate::model::ControlledEntropyModel::new(
                16,
                vec![ScheduleEntry { target_entropy: 1.0, peak: 0 }],
            )
            .unwrap(),
        );
        assert_eq!(resolve_vocab(Some(16), Some(&model)).unwrap(), 16);
        assert_eq!(resolve_vocab(None, Some(&model)).unwrap(), 16);
        assert_eq!(resolve_vocab(Some(8), None).unwrap(), 8);
        assert!(resolve_vocab(Some(8), Some(&model)).is_err());
        assert!(resolve_vocab(None, None).is_err());
    }

    #[test]
    fn token_array_rejects_junk() {
        let record: Value = serde_json::from_str(
            "{\"tokens\": [1, \"x\"], \"floats\": [1.5], \"nested\": {\"a\": 1}}",
        )
        .unwrap();
        assert!(token_array(&record, "tokens").is_err());
        assert!(token_array(&record, "missing").is_err());
        assert!(token_array(&record, "nested").is_err());
        assert!(optional_token_array(&record, "missing").unwrap().is_none());
        assert!(optional_f64_array(&record, "floats").unwrap().is_some());
    }

    #[test]
    fn error_lines_are_json_records() {
        let line = error_line(4, &Error::input("bad record"));
        let back: Value = serde_json::from_str(&line).unwrap();
        assert_eq!(back["record"], 4);
        assert!(back["error"].as_str().unwrap().contains("bad record"));
    }

    fn write_controlled_model(dir: &std::path::Path) -> PathBuf {
        let path = dir.join("model.json");
        let model = Model::Controlled(
            crate::model::ControlledEntropyModel::new(
                32,
                vec![ScheduleEntry { target_entropy: 3.0, peak: 0 }],
            )
            .unwrap(),
        );
        model.save(&path).unwrap();
        path
    }

    #[test]
    fn generate_then_detect_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model_path = write_controlled_model(dir.path());
        let prompts = dir.path().join("prompts.jsonl");
        std::fs::write(
            &prompts,
            "{\"prompt\": [1, 2]}\n{\"prompt\": [3]}\nnot json\n",
        )
        .unwrap();
        let out = dir.path().join("gen.jsonl");
        let args = GenerateArgs {
            model: model_path.clone(),
            prompts: prompts.clone(),
            out: out.clone(),
            scheme: Some("kgw".to_string()),
            tagger_bank: None,
            max_tokens: 60,
            seed: Some(11),
            watermark: WatermarkArgs { delta: Some(4.0), ..WatermarkArgs::default() },
        };
        cmd_generate(&args, &ConfigOverlay::default()).unwrap();

        let lines = read_lines(&out).unwrap();
        assert_eq!(lines.len(), 3);
        let first: Value = serde_json::from_str(&lines[0]).unwrap();
        assert_eq!(first["prompt"], serde_json::json!([1, 2]));
        assert_eq!(first["tokens"].as_array().unwrap().len(), 60);
        assert_eq!(first["trace"].as_array().unwrap().len(), 60);
        let bad: Value = serde_json::from_str(&lines[2]).unwrap();
        assert_eq!(bad["record"], 2);
        assert!(bad["error"].as_str().is_some());
        assert!(super::super::manifest::manifest_path(&out).exists());

        let model = Model::load(&model_path).unwrap();
        let detect_args = DetectArgs {
            input: out,
            out: None,
            scheme: DetectorKind::Kgw,
            vocab_size: None,
            model: Some(model_path),
            tagger_bank: None,
            tau: None,
            navigate: false,
            anchor: None,
            seed: None,
            watermark: WatermarkArgs { delta: Some(4.0), ..WatermarkArgs::default() },
        };
        let cfg = resolve_config(None, &detect_args.watermark, &ConfigOverlay::default()).unwrap();
        let record: Value = serde_json::from_str(&lines[0]).unwrap();
        let report = detect_record(
            &detect_args,
            &cfg,
            model.vocab_size(),
            Some(&model),
            None,
            &NavigatorConfig::default(),
            &record,
        )
        .unwrap();
        assert_eq!(report.total_tokens, 60);
        assert!(report.z > 2.0, "watermarked doc should score high, got z={}", report.z);
    }

    #[test]
    fn generate_rejects_the_ewd_scheme_with_a_pointer() {
        let args = GenerateArgs {
            model: PathBuf::from("unused.json"),
            prompts: PathBuf::from("unused.jsonl"),
            out: PathBuf::from("unused.out"),
            scheme: Some("ewd".to_string()),
            tagger_bank: None,
            max_tokens: 10,
            seed: None,
            watermark: WatermarkArgs::default(),
        };
        let err = cmd_generate(&args, &ConfigOverlay::default()).unwrap_err();
        assert!(err.to_string().contains("detection-side"), "got: {err}");
    }

    #[test]
    fn attack_level_zero_echoes_input_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        let weird = "{\"zzz\": 1, \"tokens\": [3, 1, 2], \"aaa\": \"keep me\"}";
        std::fs::write(&input, format!("{weird}\n")).unwrap();
        let out = dir.path().join("out.jsonl");
        let args = AttackArgs {
            input,
            out: out.clone(),
            level: 0.0,
            vocab_size: Some(8),
            model: None,
            sampler: SamplerKind::Uniform,
            seed: Some(5),
        };
        cmd_attack(&args, &ConfigOverlay::default()).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), format!("{weird}\n"));
    }
}
