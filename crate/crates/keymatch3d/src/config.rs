//! Flat key=value configuration files. Lines are `key=value`; blank lines
//! and `#` comments are ignored. Consumers read the keys they know and
//! then call [`KvConfig::reject_unknown`], so typos fail loudly.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    source: Option<PathBuf>,
}

impl KvConfig {
    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {} is not key=value: {line:?}",
                    lineno + 1
                ))
            })?;
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::config(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self {
            entries,
            consumed: BTreeSet::new(),
            source: source.map(|p| p.to_path_buf()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::parse(&text, Some(path))
    }

    /// Raw string lookup; marks the key as known.
    pub fn get(&mut self, key: &str) -> Option<String> {
        self.consumed.insert(key.to_string());
        self.entries.get(key).cloned()
    }

    pub fn get_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                Error::config(format!("key {key}: cannot parse {v:?}: {e}"))
            }),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    /// Errors on any key that no consumer asked about.
    pub fn reject_unknown(&self) -> Result<()> {
        let unknown: Vec<&String> = self
            .entries
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            return Ok(());
        }
        let src = self
            .source
            .as_ref()
            .map(|p| format!(" in {}", p.display()))
            .unwrap_or_default();
        Err(Error::config(format!(
            "unknown config key(s){src}: {}",
            unknown
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }
}

/// Serializes resolved settings back to the key=value format, for the
/// reproducibility copy placed in every output directory.
pub fn render_kv(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}
