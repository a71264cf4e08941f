//! Site description file: local `key = value` facts used to map tool
//! requirements onto the installed system.
//!
//! Recognized keys:
//!
//! - `tool.<name>.<VAR>`: value for a tool's client variable
//! - `search.libroots`: `:`-separated directories probed for libraries
//! - `scheme.<scheme>.command`: checkout command template for a scheme
//! - `build.command`: command run by `scram build`

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SiteError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("reading site file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiteInfo {
    entries: BTreeMap<String, String>,
}

// tool names are case-insensitive, variable names are not
fn normalize_key(key: &str) -> String {
    let key = key.trim();
    match key
        .strip_prefix("tool.")
        .and_then(|rest| rest.split_once('.'))
    {
        Some((tool, var)) => format!("tool.{}.{var}", tool.to_ascii_lowercase()),
        None => key.to_owned(),
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

impl SiteInfo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, SiteError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| SiteError::Syntax {
                path: origin.to_owned(),
                line: i + 1,
            })?;
            if k.trim().is_empty() {
                return Err(SiteError::Syntax {
                    path: origin.to_owned(),
                    line: i + 1,
                });
            }
            entries.insert(normalize_key(k), unquote(v.trim()).to_owned());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, SiteError> {
        let text = std::fs::read_to_string(path).map_err(|source| SiteError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Like [`SiteInfo::load`], but a missing file is an empty site.
    pub fn load_or_default(path: &Path) -> Result<Self, SiteError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(normalize_key(key), value.to_owned());
    }

    pub fn tool_value(&self, tool: &str, var: &str) -> Option<&str> {
        self.get(&format!("tool.{tool}.{var}"))
    }

    pub fn lib_roots(&self) -> Vec<PathBuf> {
        self.get("search.libroots")
            .map(|v| {
                v.split(':')
                    .filter(|p| !p.is_empty())
                    .map(PathBuf::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn scheme_command(&self, scheme: &str) -> Option<&str> {
        self.get(&format!("scheme.{scheme}.command"))
    }

    pub fn build_command(&self) -> Option<&str> {
        self.get("build.command")
    }
}

impl fmt::Display for SiteInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
