//! Per-invocation run record. One JSON file, written once when the command
//! finishes (successfully or not).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;

use crate::config::{Entry, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Interrupted,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config: BTreeMap<String, Entry>,
    pub config_digest: String,
    pub snapshot_checksum: Option<String>,
    pub seed: Option<u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Set when outputs are incomplete (interrupt or mid-run failure).
    pub partial: bool,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Command-specific summary numbers.
    pub summary: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn start(subcommand: &str, command_line: Vec<String>, settings: &Settings) -> Self {
        Self {
            command_line,
            subcommand: subcommand.to_owned(),
            config: settings.redacted(),
            config_digest: settings.digest(),
            snapshot_checksum: None,
            seed: None,
            started_at: Utc::now(),
            finished_at: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            partial: false,
            status: RunStatus::Ok,
            error: None,
            summary: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, p: impl AsRef<Path>) {
        self.inputs.push(p.as_ref().to_path_buf());
    }

    pub fn output(&mut self, p: impl AsRef<Path>) {
        self.outputs.push(p.as_ref().to_path_buf());
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.to_owned(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Where the manifest goes: the explicit path, else next to the first
    /// output as `<output>.manifest.json`, else nowhere.
    pub fn default_path(&self, explicit: Option<&Path>) -> Option<PathBuf> {
        if let Some(p) = explicit {
            return Some(p.to_path_buf());
        }
        let first = self.outputs.first()?;
        let mut name = first.file_name()?.to_os_string();
        name.push(".manifest.json");
        Some(first.with_file_name(name))
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.finished_at = Some(Utc::now());
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}
