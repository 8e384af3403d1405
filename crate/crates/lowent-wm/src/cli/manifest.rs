//! Run manifests. Every file-producing command drops a
//! `<output>.manifest.json` next to its output recording the resolved
//! configuration, seed and paths, so any artifact can be audited and
//! regenerated bit-exactly.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::io::atomic_write;
use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand that produced the output.
    pub command: String,
    /// Effective configuration after flag/file/default resolution.
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

impl RunManifest {
    pub fn begin(command: &str, config: Value, seed: u64) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Stamps the end time and writes the manifest next to `primary_output`.
    pub fn finish(mut self, primary_output: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let json = serde_json::to_string_pretty(&self)?;
        atomic_write(&manifest_path(primary_output), json.as_bytes())
    }
}

/// `out/gen.jsonl` -> `out/gen.jsonl.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".to_string());
    name.push_str(".manifest.json");
    output.with_file_name(name)
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path(Path::new("out/gen.jsonl")),
            Path::new("out/gen.jsonl.manifest.json")
        );
        assert_eq!(
            manifest_path(Path::new("table.csv")),
            Path::new("table.csv.manifest.json")
        );
    }

    #[test]
    fn finish_writes_a_parseable_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("result.jsonl");
        let mut manifest = RunManifest::begin("detect", serde_json::json!({"gamma": 0.5}), 7);
        manifest.input(Path::new("docs.jsonl"));
        manifest.output(&out);
        manifest.finish(&out).unwrap();
        let text = std::fs::read_to_string(manifest_path(&out)).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.command, "detect");
        assert_eq!(back.seed, 7);
        assert_eq!(back.inputs, vec!["docs.jsonl".to_string()]);
        assert_eq!(back.outputs, vec![out.display().to_string()]);
        assert!(back.finished_unix_ms >= back.started_unix_ms);
        assert_eq!(back.version, env!("CARGO_PKG_VERSION"));
    }
}
