//! `key = value` config files.
//!
//! Used for training hyperparameters and phone-distance weight overrides.
//! Lines are `key = value` (whitespace optional), `#` starts a comment,
//! blank lines are ignored.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("config: cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("config: key `{key}`: cannot parse `{value}` as {ty}")]
    BadValue {
        key: String,
        value: String,
        ty: &'static str,
    },
}

/// Parsed key/value pairs with typed accessors.
#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| KvError::Malformed {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, KvError> {
        let text = std::fs::read_to_string(path).map_err(|source| KvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, KvError> {
        self.typed(key, "f64", |s| s.parse::<f64>().ok())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, KvError> {
        self.typed(key, "usize", |s| s.parse::<usize>().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, KvError> {
        self.typed(key, "u64", |s| s.parse::<u64>().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, KvError> {
        self.typed(key, "bool", |s| match s {
            "true" | "1" | "yes" => Some(true),
            "false" | "0" | "no" => Some(false),
            _ => None,
        })
    }

    fn typed<T>(
        &self,
        key: &str,
        ty: &'static str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>, KvError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => parse(v).map(Some).ok_or_else(|| KvError::BadValue {
                key: key.to_string(),
                value: v.clone(),
                ty,
            }),
        }
    }
}
