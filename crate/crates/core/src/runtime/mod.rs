//! Runtime environments: what an area exports to the user's shell, and how
//! a later invocation takes it back.
//!
//! A shell cannot be changed by a child process, so every emission carries
//! its own undo record in the environment: for each variable it touches, a
//! shadow `SCRAMRT_<NAME>` holds the value from before (`+value`) or `-` if
//! the variable was unset, and `SCRAMRT_SET` names the owning area. The next
//! emission first restores from those shadows, so switching areas leaves no
//! residue.

mod shell;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::markup::{self, split_header, MarkupError, TagEvent};

pub use shell::{diff, emit_changes, emit_shell, Change, Shell};

pub type EnvMap = BTreeMap<String, String>;

pub const SHADOW_PREFIX: &str = "SCRAMRT_";
pub const OWNER_VAR: &str = "SCRAMRT_SET";
pub const APP_ENV_DOC_TYPE: &str = "BuildSystem::AppEnvDoc";

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("{name} is both assigned and prepended")]
    Conflict { name: String },
    #[error("{name} is reserved for rollback bookkeeping")]
    Reserved { name: String },
    #[error("unsupported shell dialect '{0}' (use -csh or -sh)")]
    UnsupportedShell(String),
    #[error("invalid application name '{0}'")]
    BadAppName(String),
    #[error("no application environment file {}", path.display())]
    AppEnvMissing { path: PathBuf },
    #[error("{source_id}: {message}")]
    AppEnv { source_id: String, message: String },
    #[error(transparent)]
    Markup(#[from] MarkupError),
    #[error("reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Assignments and path prepends contributed by an area.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EnvDelta {
    sets: Vec<(String, String)>,
    prepends: Vec<(String, String)>,
    area_id: String,
}

fn check_name(name: &str) -> Result<(), RuntimeError> {
    if name.starts_with(SHADOW_PREFIX) || name == "SET" || name.is_empty() {
        return Err(RuntimeError::Reserved {
            name: name.to_owned(),
        });
    }
    Ok(())
}

impl EnvDelta {
    pub fn new(area_id: &str) -> Self {
        Self {
            area_id: area_id.to_owned(),
            ..Self::default()
        }
    }

    pub fn area_id(&self) -> &str {
        &self.area_id
    }

    pub fn set_area_id(&mut self, area_id: &str) {
        self.area_id = area_id.to_owned();
    }

    /// Later assignments to the same name replace earlier ones.
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), RuntimeError> {
        check_name(name)?;
        if self.prepends.iter().any(|(n, _)| n == name) {
            return Err(RuntimeError::Conflict {
                name: name.to_owned(),
            });
        }
        match self.sets.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = value.to_owned(),
            None => self.sets.push((name.to_owned(), value.to_owned())),
        }
        Ok(())
    }

    pub fn prepend(&mut self, name: &str, value: &str) -> Result<(), RuntimeError> {
        check_name(name)?;
        if self.sets.iter().any(|(n, _)| n == name) {
            return Err(RuntimeError::Conflict {
                name: name.to_owned(),
            });
        }
        self.prepends.push((name.to_owned(), value.to_owned()));
        Ok(())
    }

    /// Appends another delta's entries; the area id is kept.
    pub fn extend(&mut self, other: &EnvDelta) -> Result<(), RuntimeError> {
        for (n, v) in &other.sets {
            self.set(n, v)?;
        }
        for (n, v) in &other.prepends {
            self.prepend(n, v)?;
        }
        Ok(())
    }

    pub fn sets(&self) -> &[(String, String)] {
        &self.sets
    }

    pub fn prepends(&self) -> &[(String, String)] {
        &self.prepends
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty() && self.prepends.is_empty()
    }

    pub fn touched(&self) -> BTreeSet<&str> {
        self.sets
            .iter()
            .chain(&self.prepends)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

fn prepend_value(current: Option<&String>, value: &str) -> Option<String> {
    match current {
        _ if value.is_empty() => None,
        None => Some(value.to_owned()),
        Some(cur) if cur.is_empty() => Some(value.to_owned()),
        Some(cur) if cur == value || cur.starts_with(&format!("{value}:")) => None,
        Some(cur) => Some(format!("{value}:{cur}")),
    }
}

/// Applies a delta to a plain environment map, without bookkeeping.
pub fn apply_delta(env: &EnvMap, delta: &EnvDelta) -> EnvMap {
    let mut out = env.clone();
    for (name, value) in &delta.sets {
        out.insert(name.clone(), value.clone());
    }
    for (name, value) in &delta.prepends {
        if let Some(v) = prepend_value(out.get(name), value) {
            out.insert(name.clone(), v);
        }
    }
    out
}

/// Pre-application values of every variable an emission touched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RollbackState {
    pub saved: BTreeMap<String, Option<String>>,
    pub owner: Option<String>,
}

impl RollbackState {
    /// Reads the shadow variables left by a previous emission. Shadows with
    /// an unrecognized encoding are ignored.
    pub fn from_env(env: &EnvMap) -> Self {
        let mut saved = BTreeMap::new();
        for (k, v) in env {
            if k == OWNER_VAR {
                continue;
            }
            let Some(name) = k.strip_prefix(SHADOW_PREFIX) else {
                continue;
            };
            if name.is_empty() {
                continue;
            }
            let prior = match v.as_str() {
                "-" => None,
                s => match s.strip_prefix('+') {
                    Some(p) => Some(p.to_owned()),
                    None => continue,
                },
            };
            saved.insert(name.to_owned(), prior);
        }
        Self {
            saved,
            owner: env.get(OWNER_VAR).cloned(),
        }
    }

    /// The environment as it was before the recorded emission, with all
    /// bookkeeping removed.
    pub fn restore(&self, env: &EnvMap) -> EnvMap {
        let mut out = env.clone();
        out.retain(|k, _| !k.starts_with(SHADOW_PREFIX));
        for (name, prior) in &self.saved {
            match prior {
                Some(v) => out.insert(name.clone(), v.clone()),
                None => out.remove(name),
            };
        }
        out
    }

    pub fn shadow_value(prior: Option<&String>) -> String {
        match prior {
            Some(v) => format!("+{v}"),
            None => "-".to_owned(),
        }
    }
}

/// The environment after rolling back any previous emission and applying
/// `layers` in order, including the new bookkeeping variables.
pub fn transition(current: &EnvMap, layers: &[&EnvDelta]) -> EnvMap {
    let base = RollbackState::from_env(current).restore(current);
    let mut out = base.clone();
    let mut touched = BTreeSet::new();
    for delta in layers {
        out = apply_delta(&out, delta);
        touched.extend(delta.touched());
    }
    for name in touched {
        out.insert(
            format!("{SHADOW_PREFIX}{name}"),
            RollbackState::shadow_value(base.get(name)),
        );
    }
    let owner = layers
        .first()
        .map(|d| d.area_id.clone())
        .unwrap_or_default();
    out.insert(OWNER_VAR.to_owned(), owner);
    out
}

pub fn library_path_var(os: &str) -> &'static str {
    if os.eq_ignore_ascii_case("darwin") {
        "DYLD_LIBRARY_PATH"
    } else {
        "LD_LIBRARY_PATH"
    }
}

/// Tool contributions in configuration order, then `bin/` and `lib/` of the
/// central area, then of the developer area. Each prepend pushes to the
/// front, so the developer area ends up searched first.
pub fn compute_runtime_env(
    contributions: &[EnvDelta],
    central: &Path,
    developer: Option<&Path>,
    os: &str,
    area_id: &str,
) -> Result<EnvDelta, RuntimeError> {
    let mut delta = EnvDelta::new(area_id);
    for c in contributions {
        delta.extend(c)?;
    }
    let lib_var = library_path_var(os);
    for root in std::iter::once(central).chain(developer) {
        delta.prepend("PATH", &root.join("bin").to_string_lossy())?;
        delta.prepend(lib_var, &root.join("lib").to_string_lossy())?;
    }
    Ok(delta)
}

/// Builds an overlay from an application environment document body.
pub fn parse_app_env(events: &[TagEvent], area_id: &str) -> Result<EnvDelta, RuntimeError> {
    let mut delta = EnvDelta::new(area_id);
    for ev in events.iter().filter(|e| e.is_open("Environment")) {
        let fail = |message: String| RuntimeError::AppEnv {
            source_id: ev.location.to_string(),
            message,
        };
        let name = ev
            .attr("name")
            .filter(|n| !n.is_empty())
            .ok_or_else(|| fail("<Environment> requires a name attribute".into()))?;
        let value = ev
            .attr("value")
            .ok_or_else(|| fail(format!("{name} has no value")))?;
        let runtime_path = match ev.attr("type") {
            None => false,
            Some(t) if t.eq_ignore_ascii_case("Runtime_path") => true,
            Some(t) => return Err(fail(format!("unknown variable type '{t}'"))),
        };
        let added = if runtime_path {
            delta.prepend(name, value)
        } else {
            delta.set(name, value)
        };
        added.map_err(|e| fail(e.to_string()))?;
    }
    Ok(delta)
}

/// Reads `<config_dir>/app-env/<app>`.
pub fn load_app_env_file(
    config_dir: &Path,
    app: &str,
    area_id: &str,
) -> Result<EnvDelta, RuntimeError> {
    if app.is_empty() || app.contains(['/', '\\']) || app.starts_with('.') {
        return Err(RuntimeError::BadAppName(app.to_owned()));
    }
    let path = config_dir.join("app-env").join(app);
    if !path.is_file() {
        return Err(RuntimeError::AppEnvMissing { path });
    }
    let text = std::fs::read_to_string(&path).map_err(|source| RuntimeError::Io {
        path: path.clone(),
        source,
    })?;
    let source_id = path.display().to_string();
    let (header, body) = split_header(markup::tokenize(&text, &source_id)?)?;
    if header.doc_type != APP_ENV_DOC_TYPE {
        return Err(RuntimeError::AppEnv {
            source_id,
            message: format!(
                "expected a {APP_ENV_DOC_TYPE} document, found {}",
                header.doc_type
            ),
        });
    }
    parse_app_env(&body, area_id)
}
