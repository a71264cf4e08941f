//! Central installations, developer areas and the operations run inside
//! them.

mod area;
mod bootstrap;
mod ops;
mod registry;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use area::{area_context, AreaKind, AreaLock, AreaState, ProjectArea, LAYOUT};
pub use bootstrap::{
    normalize_destination, parse_bootstrap, BootStrapDoc, Download, BOOTSTRAP_DOC_TYPE,
};
pub use ops::{parse_location, Bootstrapped, Session};
pub use registry::{list_installs, InstallationRecord, Registry};

use crate::activedoc::ActivateError;
use crate::config::{detect_architecture, Architecture, ConfigError};
use crate::runtime::{EnvMap, RuntimeError};
use crate::site::SiteError;
use crate::toolspec::{ResolveError, ToolSpecError};
use crate::url::UrlError;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not in a SCRAM area: no .SCRAM directory above {}", cwd.display())]
    NotInArea { cwd: PathBuf },
    #[error("{}: {message}", path.display())]
    BadMeta { path: PathBuf, message: String },
    #[error("central area {} is unusable: {message}", link.display())]
    BrokenLink { link: PathBuf, message: String },
    #[error("area {} is busy: another scram command holds its lock", area.display())]
    Busy { area: PathBuf },
    #[error("{} already exists", .0.display())]
    DestinationExists(PathBuf),
    #[error("invalid tool name '{0}'")]
    BadToolName(String),
    #[error("{url} is a {found} document, expected {expected}")]
    WrongPayload {
        url: String,
        expected: &'static str,
        found: String,
    },
    #[error("{url} describes tool {found}, not {expected}")]
    SpecMismatch {
        url: String,
        expected: String,
        found: String,
    },
    #[error(
        "unknown project {project}; installed projects: {}",
        list_or_none(known)
    )]
    UnknownProject { project: String, known: Vec<String> },
    #[error(
        "{project} {version} is not installed for {arch}; available versions: {}",
        list_or_none(available)
    )]
    UnknownVersion {
        project: String,
        version: String,
        arch: String,
        available: Vec<String>,
    },
    #[error("{project} {version} for {arch} is already registered at {}", existing.display())]
    RegistryConflict {
        project: String,
        version: String,
        arch: String,
        existing: PathBuf,
    },
    #[error("only a central area can be installed")]
    NotCentral,
    #[error("area {} is incomplete: build it successfully first, or pass --force", area.display())]
    Incomplete { area: PathBuf },
    #[error("unknown tool {name}; known tools: {}", list_or_none(known))]
    UnknownTool { name: String, known: Vec<String> },
    #[error("setting up a tool from a URL needs a name and a version")]
    SetupArgs,
    #[error("no tool record for {}: run scram setup", tools.join(", "))]
    MissingRecords { tools: Vec<String> },
    #[error("no build command configured: set build.command in the site file")]
    NoBuildCommand,
    #[error(transparent)]
    Activate(#[from] ActivateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ToolSpec(#[from] ToolSpecError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Site(#[from] SiteError),
    #[error(transparent)]
    Url(#[from] UrlError),
}

fn list_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "none".to_owned()
    } else {
        items.join(", ")
    }
}

/// Locations and switches taken from the environment and the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub install_root: PathBuf,
    pub site_file: PathBuf,
    pub cache_dir: PathBuf,
    /// Explicit registry location; otherwise `scramdb` under the root in
    /// question.
    pub lookupdb: Option<PathBuf>,
    pub arch: Architecture,
    pub refresh: bool,
}

impl Settings {
    /// `SCRAM_ROOT`, else the parent of the enclosing area's central
    /// installation, else `cwd` is the install root. `SCRAM_SITE`,
    /// `SCRAM_CACHE`, `SCRAM_LOOKUPDB` and `SCRAM_ARCH` override the rest;
    /// `arch_flag` beats `SCRAM_ARCH`.
    pub fn from_env(
        env: &EnvMap,
        cwd: &Path,
        arch_flag: Option<&str>,
        refresh: bool,
    ) -> Result<Self, ProjectError> {
        let var = |k: &str| env.get(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        let install_root = var("SCRAM_ROOT").unwrap_or_else(|| {
            area_context(cwd)
                .ok()
                .and_then(|a| a.central_location().parent().map(Path::to_path_buf))
                .unwrap_or_else(|| cwd.to_owned())
        });
        let arch_override = arch_flag.or(env
            .get("SCRAM_ARCH")
            .map(String::as_str)
            .filter(|s| !s.is_empty()));
        Ok(Self {
            site_file: var("SCRAM_SITE").unwrap_or_else(|| install_root.join("site.cfg")),
            cache_dir: var("SCRAM_CACHE").unwrap_or_else(|| install_root.join(".scram-cache")),
            lookupdb: var("SCRAM_LOOKUPDB"),
            arch: detect_architecture(arch_override)?,
            install_root,
            refresh,
        })
    }

    pub fn registry_path(&self, root: &Path) -> PathBuf {
        self.lookupdb
            .clone()
            .unwrap_or_else(|| root.join("scramdb"))
    }
}
