//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are
//! normalized so that `lambda-max`, `--lambda-max` and `lambda_max` name
//! the same entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Result, SysIdError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches('-').replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| SysIdError::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = normalize_key(k);
            if key.is_empty() {
                return Err(SysIdError::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(SysIdError::Parse {
                    line: i + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            SysIdError::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(|(_, v)| v.as_str())
    }

    /// Typed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(&normalize_key(key)) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| SysIdError::Parse {
                line: *line,
                msg: format!("invalid value `{v}` for `{key}`"),
            }),
        }
    }

    /// Comma-separated list under `key`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(&normalize_key(key)) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|p| {
                    p.trim().parse().map_err(|_| SysIdError::Parse {
                        line: *line,
                        msg: format!("invalid list element `{}` for `{key}`", p.trim()),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.iter().any(|a| normalize_key(a) == *k) {
                return Err(SysIdError::Parse {
                    line: *line,
                    msg: format!("unknown key `{k}` (allowed: {})", allowed.join(", ")),
                });
            }
        }
        Ok(())
    }
}

/// Flag value, else file value, else the default.
pub fn resolve<T: FromStr + Clone>(flag: Option<T>, file: Option<&ConfigFile>, key: &str, default: T) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file {
        Some(f) => Ok(f.get(key)?.unwrap_or(default)),
        None => Ok(default),
    }
}
