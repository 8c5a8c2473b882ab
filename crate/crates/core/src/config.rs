//! `key=value` configuration files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("invalid value {value:?} for {key}: {message}")]
    Value { key: String, value: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Parsed `key=value` pairs. Blank lines and `#` comments (whole-line or
/// trailing) are ignored; keys and values are trimmed, and `-` in keys is
/// read as `_`, so `batch-size` and `batch_size` are the same key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: raw.to_string(),
                });
            };
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: k + 1,
                    text: raw.to_string(),
                });
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: k + 1, key });
            }
        }
        Ok(ConfigFile { values })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    /// `cli` if given, else the file value.
    pub fn resolve<T: FromStr>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}
