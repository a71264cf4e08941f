//! The bootstrap file that drives a central installation:
//!
//! ```text
//! <doc type=BuildSystem::BootStrapDoc version=1.0>
//! <project name=ORCA version=7_1_3>
//! <download url=file:sources/README to=src/README>
//! <config url=config/requirements.doc>
//! ```
//!
//! Relative URLs resolve against the bootstrap file's own URL.

use std::path::{Component, Path, PathBuf};

use crate::markup::TagEvent;

pub const BOOTSTRAP_DOC_TYPE: &str = "BuildSystem::BootStrapDoc";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Download {
    pub url: String,
    /// Relative to the area root; never escapes it.
    pub to: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootStrapDoc {
    pub name: String,
    pub version: String,
    pub downloads: Vec<Download>,
    pub config_url: Option<String>,
    /// URL relative references resolve against.
    pub base: Option<String>,
}

/// Drops `.` components; rejects absolute paths and `..`.
pub fn normalize_destination(raw: &str) -> Result<PathBuf, String> {
    let mut out = PathBuf::new();
    for comp in Path::new(raw).components() {
        match comp {
            Component::Normal(c) => out.push(c),
            Component::CurDir => {}
            _ => return Err(format!("download destination '{raw}' escapes the area")),
        }
    }
    if out.as_os_str().is_empty() {
        return Err(format!("empty download destination '{raw}'"));
    }
    Ok(out)
}

pub fn parse_bootstrap(events: &[TagEvent]) -> Result<BootStrapDoc, String> {
    let mut project: Option<(String, String)> = None;
    let mut downloads = Vec::new();
    let mut config_url = None;
    let mut base = None;
    for ev in events {
        let attr = |key: &str| {
            ev.attr(key)
                .filter(|v| !v.is_empty())
                .map(str::to_owned)
                .ok_or_else(|| {
                    format!(
                        "{}: <{}> requires a {key} attribute",
                        ev.location,
                        ev.name().unwrap_or("?")
                    )
                })
        };
        if ev.is_open("project") {
            if project.is_some() {
                return Err(format!("{}: more than one <project>", ev.location));
            }
            project = Some((attr("name")?, attr("version")?));
        } else if ev.is_open("download") {
            let to =
                normalize_destination(&attr("to")?).map_err(|e| format!("{}: {e}", ev.location))?;
            downloads.push(Download {
                url: attr("url")?,
                to,
            });
        } else if ev.is_open("config") {
            config_url = Some(attr("url")?);
        } else if ev.is_open("base") {
            base = Some(attr("url")?);
        }
    }
    let (name, version) = project.ok_or("bootstrap file has no <project name= version=>")?;
    Ok(BootStrapDoc {
        name,
        version,
        downloads,
        config_url,
        base,
    })
}
