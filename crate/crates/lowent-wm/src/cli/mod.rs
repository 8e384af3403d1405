//! Command-line interface: argument parsing, config resolution and the
//! subcommand drivers.
//!
//! Precedence for every setting is flags > config file (`--config`, else
//! the `LOWENT_WM_CONFIG` env var) > built-in defaults. Commands honor one
//! `--seed` and draw named sub-streams from it, so identical invocations
//! produce byte-identical artifacts.

pub mod commands;
pub mod io;
pub mod manifest;

use clap::Parser;

pub use commands::{
    AttackArgs, CalibrateArgs, DetectArgs, DetectorKind, GenerateArgs, NavigateArgs, SamplerKind,
    SweepArgs, TrainTaggerArgs, WatermarkArgs,
};
pub use io::{atomic_write, ConfigOverlay};
pub use manifest::{manifest_path, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "lowent-wm",
    version,
    about = "Statistical text watermarking tuned for low-entropy generation"
)]
pub struct Cli {
    /// Config file (key = value or JSON) with defaults for the watermark
    /// flags; overrides the LOWENT_WM_CONFIG env var.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Print wall-clock timing to stderr.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Generate watermarked continuations for a prompt file.
    Generate(GenerateArgs),
    /// Score suspect token sequences for the watermark.
    Detect(DetectArgs),
    /// Train an entropy-tagger bank over a threshold grid.
    TrainTagger(TrainTaggerArgs),
    /// Emit per-document threshold-navigation traces.
    Navigate(NavigateArgs),
    /// Estimate the null false-positive rate of full detection.
    Calibrate(CalibrateArgs),
    /// Corrupt token sequences by random substitution.
    Attack(AttackArgs),
    /// Run a parameter sweep and emit CSV/JSON result tables.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Detect(_) => "detect",
            Command::TrainTagger(_) => "train-tagger",
            Command::Navigate(_) => "navigate",
            Command::Calibrate(_) => "calibrate",
            Command::Attack(_) => "attack",
            Command::Sweep(_) => "sweep",
        }
    }
}

/// Parses `std::env::args`, runs the command, and returns the process exit
/// code: 0 on success (per-record errors included), 1 on a fatal error,
/// 2 on bad usage.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let start = std::time::Instant::now();
    let name = cli.command.name();
    let result = commands::dispatch(&cli);
    if cli.timing {
        eprintln!("{name}: {:.3}s", start.elapsed().as_secs_f64());
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_line_parses_every_subcommand() {
        let cli = Cli::try_parse_from([
            "lowent-wm", "generate", "--model", "m.json", "--prompts", "p.jsonl", "--out",
            "g.jsonl", "--scheme", "sweet", "--tau-gen", "0.6",
        ])
        .unwrap();
        assert_eq!(cli.command.name(), "generate");

        let cli = Cli::try_parse_from([
            "lowent-wm", "detect", "--input", "g.jsonl", "--scheme", "ewd", "--vocab-size", "64",
        ])
        .unwrap();
        assert_eq!(cli.command.name(), "detect");
        match cli.command {
            Command::Detect(args) => assert_eq!(args.scheme, DetectorKind::Ewd),
            other => panic!("parsed the wrong command: {}", other.name()),
        }

        for argv in [
            vec!["lowent-wm", "train-tagger", "--model", "m.json", "--corpus", "c.txt", "--out", "b.json"],
            vec!["lowent-wm", "navigate", "--input", "g.jsonl", "--vocab-size", "64"],
            vec!["lowent-wm", "calibrate", "--z", "2", "--trials", "100000"],
            vec!["lowent-wm", "attack", "--input", "g.jsonl", "--out", "a.jsonl", "--level", "0.25", "--vocab-size", "64", "--sampler", "uniform"],
            vec!["lowent-wm", "sweep", "--model", "m.json", "--out", "t.csv", "--deltas", "0,1,3"],
        ] {
            let name = argv[1].to_string();
            let cli = Cli::try_parse_from(argv).unwrap();
            assert_eq!(cli.command.name(), name);
        }
    }

    #[test]
    fn sweep_deltas_flag_splits_on_commas() {
        let cli = Cli::try_parse_from([
            "lowent-wm", "sweep", "--model", "m.json", "--out", "t.csv", "--deltas", "0,1,3",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep(args) => assert_eq!(args.deltas, vec![0.0, 1.0, 3.0]),
            other => panic!("parsed the wrong command: {}", other.name()),
        }
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert!(Cli::try_parse_from(["lowent-wm", "calibrate", "--zz", "2"]).is_err());
        assert!(Cli::try_parse_from(["lowent-wm", "frobnicate"]).is_err());
    }
}
