//! Atomic file output, CSV formatting and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Writes to a sibling temp file, then renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Collects the files a command writes so the manifest can list them.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Io(format!("{name}: {e}"));
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(&r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.raw(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        s.push('\n');
        self.raw(name, s.as_bytes())
    }

    pub fn raw_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.raw(name, text.as_bytes())
    }

    fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

/// sha256 of the canonical JSON form (keys sorted) of the effective config.
pub fn config_digest<T: Serialize>(command: &str, config: &T) -> String {
    let value = serde_json::json!({ "command": command, "config": config });
    // serde_json maps are ordered by key, so this string is canonical
    let canonical = serde_json::to_string(&value).expect("config serialises");
    let hash = Sha256::digest(canonical.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub master_seed: Option<u64>,
    pub tool_version: String,
    pub csv_schema_version: u32,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
}

/// One row of a summary: a metric, its interval if any, and the verdict.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct Check {
    pub metric: String,
    pub value: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// None for informational rows.
    pub pass: Option<bool>,
}

impl Check {
    pub fn new(metric: impl Into<String>, value: f64, pass: Option<bool>) -> Self {
        Self { metric: metric.into(), value, ci_lo: None, ci_hi: None, pass }
    }

    pub fn with_ci(mut self, lo: f64, hi: f64) -> Self {
        self.ci_lo = Some(lo);
        self.ci_hi = Some(hi);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<D: Serialize> {
    pub command: String,
    pub checks: Vec<Check>,
    pub details: D,
}

pub fn failed(checks: &[Check]) -> Vec<&str> {
    checks.iter().filter(|c| c.pass == Some(false)).map(|c| c.metric.as_str()).collect()
}
