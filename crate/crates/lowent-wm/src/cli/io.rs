//! File plumbing for the command-line layer: atomic writes, JSONL helpers
//! and config-file overlays.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::watermark::{Scheme, WatermarkConfig};

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `path` atomically: the content lands in a temp file in
/// the target directory and is renamed into place, so a reader never sees a
/// half-written file and concurrent writers of different outputs cannot
/// trample each other.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("cannot write {}: no file name", path.display())))?;
    let tag = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(
        ".{}.{}.{tag}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)
        .map_err(|e| Error::input(format!("{}: {e}", tmp.display())))?;
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::input(format!("{}: {e}", path.display())));
    }
    Ok(())
}

/// Reads a file as its non-blank lines, in order.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

/// Writes one record per line with a trailing newline, atomically.
pub fn write_jsonl(path: &Path, lines: &[String]) -> Result<()> {
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Optional overrides read from a config file. Every field mirrors a flag;
/// flags win over the file and the file wins over built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverlay {
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub key: Option<u64>,
    pub z_threshold: Option<f64>,
    pub scheme: Option<Scheme>,
    pub tau_gen: Option<f64>,
    pub seed: Option<u64>,
}

impl ConfigOverlay {
    /// Parses config text. Content starting with `{` is JSON; anything else
    /// is `key = value` lines with `#` comments.
    pub fn parse(text: &str) -> Result<ConfigOverlay> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text)
                .map_err(|e| Error::config(format!("config file: {e}")));
        }
        let mut overlay = ConfigOverlay::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "config line {}: expected key = value, got {raw:?}",
                    idx + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "gamma" => overlay.gamma = Some(parse_f64(key, value)?),
                "delta" => overlay.delta = Some(parse_f64(key, value)?),
                "key" => overlay.key = Some(parse_u64(key, value)?),
                "z_threshold" => overlay.z_threshold = Some(parse_f64(key, value)?),
                "scheme" => overlay.scheme = Some(value.parse()?),
                "tau_gen" => overlay.tau_gen = Some(parse_f64(key, value)?),
                "seed" => overlay.seed = Some(parse_u64(key, value)?),
                other => {
                    return Err(Error::config(format!(
                        "config line {}: unknown key {other:?}",
                        idx + 1
                    )))
                }
            }
        }
        Ok(overlay)
    }

    pub fn load(path: &Path) -> Result<ConfigOverlay> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves the overlay for a command: an explicit `--config` path, else
    /// the `LOWENT_WM_CONFIG` env var, else nothing.
    pub fn resolve(explicit: Option<&Path>) -> Result<ConfigOverlay> {
        if let Some(path) = explicit {
            return Self::load(path);
        }
        match std::env::var_os("LOWENT_WM_CONFIG") {
            Some(path) => Self::load(Path::new(&path)),
            None => Ok(ConfigOverlay::default()),
        }
    }

    /// Lays the file values over `cfg`; callers apply flag values on top.
    pub fn apply(&self, cfg: &mut WatermarkConfig) {
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.key {
            cfg.key = v;
        }
        if let Some(v) = self.z_threshold {
            cfg.z_threshold = v;
        }
        if let Some(v) = self.scheme {
            cfg.scheme = v;
        }
        if let Some(v) = self.tau_gen {
            cfg.tau_gen = v;
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::config(format!("config key {key}: expected a number, got {value:?}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| {
        Error::config(format!("config key {key}: expected an integer, got {value:?}"))
    })
}
