//! Layered settings: command-line flags over `WIKIRACE_*` environment
//! variables over a `key = value` file over built-in defaults. Every
//! resolved value remembers which layer it came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const ENV_PREFIX: &str = "WIKIRACE_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entry {
    pub value: String,
    pub source: Source,
}

/// Keys and their defaults. Anything else in a config file is rejected.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("graph", "data/graph.wkrg"),
    ("tasks_dir", "data/tasks"),
    ("distances_dir", ""),
    ("log_dir", "data/logs"),
    ("seed", "0"),
    ("max_steps", "30"),
    ("link_cap", "50"),
    ("parse_retries", "2"),
    ("parallel", "1"),
    ("api_base", "https://api.openai.com/v1"),
    ("api_key", ""),
    ("temperature", "0"),
    ("max_tokens", ""),
    ("timeout_secs", "120"),
    ("retries", "3"),
    ("backoff_ms", "500"),
    ("requests_per_minute", "60"),
    ("price_input_per_million", ""),
    ("price_output_per_million", ""),
    ("bind", "127.0.0.1:8080"),
    ("ui_dir", ""),
    ("idle_timeout_secs", "86400"),
];

const SECRET_KEYS: &[&str] = &["api_key"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    entries: BTreeMap<String, Entry>,
}

/// Parses `key = value` lines. `#` starts a comment line; blank lines are
/// skipped; values may be wrapped in double quotes.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
        let key = k.trim().replace('-', "_");
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        if !DEFAULTS.iter().any(|(d, _)| *d == key) {
            bail!("config line {}: unknown key {key:?}", i + 1);
        }
        out.insert(key, v.to_owned());
    }
    Ok(out)
}

impl Settings {
    /// Resolves all layers. `env` is passed in so callers and tests can
    /// control it.
    pub fn resolve<E>(file: Option<&Path>, env: E, flags: &[(&str, Option<String>)]) -> Result<Self>
    where
        E: Fn(&str) -> Option<String>,
    {
        let mut entries: BTreeMap<String, Entry> = DEFAULTS
            .iter()
            .map(|&(k, v)| {
                (
                    k.to_owned(),
                    Entry {
                        value: v.to_owned(),
                        source: Source::Default,
                    },
                )
            })
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            for (k, value) in parse_file(&text).with_context(|| format!("in {}", path.display()))? {
                entries.insert(
                    k,
                    Entry {
                        value,
                        source: Source::File,
                    },
                );
            }
        }
        for &(k, _) in DEFAULTS {
            if let Some(value) = env(&format!("{ENV_PREFIX}{}", k.to_ascii_uppercase())) {
                entries.insert(
                    k.to_owned(),
                    Entry {
                        value,
                        source: Source::Env,
                    },
                );
            }
        }
        for (k, v) in flags {
            if let Some(value) = v {
                if !entries.contains_key(*k) {
                    bail!("flag for unknown setting {k:?}");
                }
                entries.insert(
                    (*k).to_owned(),
                    Entry {
                        value: value.clone(),
                        source: Source::Flag,
                    },
                );
            }
        }
        Ok(Self { entries })
    }

    pub fn entry(&self, key: &str) -> &Entry {
        self.entries
            .get(key)
            .unwrap_or_else(|| panic!("setting {key:?} has no default"))
    }

    pub fn raw(&self, key: &str) -> &str {
        &self.entry(key).value
    }

    /// `None` for an empty value.
    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|s| !s.is_empty())
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.raw(key)
            .parse()
            .map_err(|e| anyhow!("setting {key} = {:?}: {e}", self.raw(key)))
    }

    pub fn get_opt<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.opt_str(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    /// Resolved values with secrets masked, for manifests.
    pub fn redacted(&self) -> BTreeMap<String, Entry> {
        self.entries
            .iter()
            .map(|(k, e)| {
                let mut e = e.clone();
                if SECRET_KEYS.contains(&k.as_str()) && !e.value.is_empty() {
                    e.value = "<redacted>".into();
                }
                (k.clone(), e)
            })
            .collect()
    }

    /// SHA-256 over the redacted `key=value` lines in key order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, e) in self.redacted() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(e.value.as_bytes());
            h.update(b"\n");
        }
        format!("{:x}", h.finalize())
    }
}
