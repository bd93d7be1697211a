//! Key-value manifest written next to every set of outputs.
//!
//! One `key = value` pair per line; blank lines and `#` comments are
//! ignored. Keys are unique and keep their insertion order.

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: invalid key {key:?}")]
    Key { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value. Line breaks in `value` are
    /// folded to spaces.
    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        assert!(valid_key(key), "invalid manifest key {key:?}");
        let value = value
            .to_string()
            .replace(['\n', '\r'], " ")
            .trim()
            .to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Records the SHA-256 of an output file under `file.<name>`.
    pub fn record_file(&mut self, name: &str, bytes: &[u8]) {
        self.set(&format!("file.{name}"), hex::encode(Sha256::digest(bytes)));
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_string())
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let mut m = Manifest::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (k, v) = s.split_once('=').ok_or(ManifestError::Syntax { line })?;
        let k = k.trim();
        if !valid_key(k) {
            return Err(ManifestError::Key {
                line,
                key: k.to_string(),
            });
        }
        if m.get(k).is_some() {
            return Err(ManifestError::Duplicate {
                line,
                key: k.to_string(),
            });
        }
        m.entries.push((k.to_string(), v.trim().to_string()));
    }
    Ok(m)
}
