//! Configurations, project requirements and architecture scoping.
//!
//! A configuration pins `(tool, version, spec url)` centrally, optionally
//! per architecture. A project's requirements document only selects tools by
//! name; versions always come from the configuration.

use std::fmt;
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::{Location, TagEvent};
use crate::url::{ResourceUrl, UrlError};

pub const CONFIGURATION_DOC_TYPE: &str = "BuildSystem::Configuration";
pub const REQUIREMENTS_DOC_TYPE: &str = "BuildSystem::Requirements";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{location}: {message}")]
    Document { location: Location, message: String },
    #[error("malformed architecture '{0}' (expected OS__RELEASE, e.g. Linux__2.4)")]
    BadArchitecture(String),
    #[error("no configuration entry for {} on {arch}", tools.join(", "))]
    UnknownSelection { tools: Vec<String>, arch: String },
    #[error("{tool} is pinned more than once for {arch} with equally specific scopes ({})", scopes.join(", "))]
    Ambiguous {
        tool: String,
        arch: String,
        scopes: Vec<String>,
    },
}

/// Canonical `<os>__<release>` platform name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Architecture {
    pub os: String,
    pub release: String,
}

impl Architecture {
    pub fn canonical(&self) -> String {
        format!("{}__{}", self.os, self.release)
    }
}

impl FromStr for Architecture {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadArchitecture(s.to_owned());
        let (os, release) = s.split_once("__").ok_or_else(bad)?;
        let os_ok = !os.is_empty() && os.chars().all(|c| c.is_ascii_alphanumeric());
        let release_ok =
            !release.is_empty() && release.chars().all(|c| c.is_ascii_digit() || c == '.');
        if !os_ok || !release_ok {
            return Err(bad());
        }
        Ok(Self {
            os: os.to_owned(),
            release: release.to_owned(),
        })
    }
}

impl TryFrom<String> for Architecture {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Architecture> for String {
    fn from(a: Architecture) -> Self {
        a.canonical()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__{}", self.os, self.release)
    }
}

/// Leading `major.minor` of a kernel release such as `2.4.20-8smp`.
fn truncate_release(release: &str) -> String {
    let numeric: String = release
        .chars()
        .take_while(|c| c.is_ascii_digit() || *c == '.')
        .collect();
    let parts: Vec<&str> = numeric
        .split('.')
        .filter(|p| !p.is_empty())
        .take(2)
        .collect();
    if parts.is_empty() {
        "0".to_owned()
    } else {
        parts.join(".")
    }
}

fn uname(flag: &str) -> Option<String> {
    let out = Command::new("uname").arg(flag).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_owned())
        .filter(|s| !s.is_empty())
}

/// Uses `override_arch` if given, else `uname -s` and `uname -r` cut to
/// `major.minor`.
pub fn detect_architecture(override_arch: Option<&str>) -> Result<Architecture, ConfigError> {
    if let Some(arch) = override_arch {
        return arch.parse();
    }
    let os = uname("-s").unwrap_or_else(|| std::env::consts::OS.to_owned());
    let os: String = os.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    let release = uname("-r")
        .map(|r| truncate_release(&r))
        .unwrap_or_else(|| "0".to_owned());
    format!("{os}__{release}").parse()
}

/// Whether an `<Architecture>` scope covers `arch`: the scope is empty, equal
/// to the canonical name, or a prefix of it ending at a component boundary.
/// `SunOS__5` covers `SunOS__5.8` but not `SunOS__51`.
pub fn match_architecture(scope: &str, arch: &Architecture) -> bool {
    if scope.is_empty() {
        return true;
    }
    let canonical = arch.canonical();
    let Some(rest) = canonical.strip_prefix(scope) else {
        return false;
    };
    rest.is_empty() || rest.starts_with(['.', '_']) || scope.ends_with(['.', '_'])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequireEntry {
    pub name: String,
    pub version: String,
    /// As written; may be relative to `base`.
    pub url: String,
    /// Empty for all architectures.
    pub arch_scope: String,
    /// URL that relative spec URLs resolve against.
    pub base: Option<String>,
}

impl RequireEntry {
    pub fn spec_url(&self) -> Result<ResourceUrl, UrlError> {
        let base = self
            .base
            .as_deref()
            .map(|b| ResourceUrl::parse(b, None))
            .transpose()?;
        ResourceUrl::parse(&self.url, base.as_ref())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigurationDoc {
    pub base: Option<String>,
    pub entries: Vec<RequireEntry>,
}

impl ConfigurationDoc {
    /// Gives entries without a base the URL of the document they came from.
    pub fn fill_base(&mut self, doc_url: &str) {
        for e in self.entries.iter_mut().filter(|e| e.base.is_none()) {
            e.base = Some(doc_url.to_owned());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Select {
    pub name: String,
    pub arch_scope: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequirementsDoc {
    pub base: Option<String>,
    /// Included configuration URLs, as written.
    pub includes: Vec<String>,
    pub selects: Vec<Select>,
    /// `require` entries that reached this document through splicing.
    pub inline: ConfigurationDoc,
}

fn doc_error(ev: &TagEvent, message: impl Into<String>) -> ConfigError {
    ConfigError::Document {
        location: ev.location.clone(),
        message: message.into(),
    }
}

fn required<'e>(ev: &'e TagEvent, key: &str) -> Result<&'e str, ConfigError> {
    ev.attr(key)
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| {
            doc_error(
                ev,
                format!("<{}> requires a {key} attribute", ev.name().unwrap_or("?")),
            )
        })
}

/// Collects require entries; shared by both document kinds.
#[derive(Default)]
struct RequireCollector {
    scope: String,
    base: Option<String>,
    entries: Vec<RequireEntry>,
    used: bool,
}

impl RequireCollector {
    fn handle(&mut self, ev: &TagEvent) -> Result<bool, ConfigError> {
        if ev.is_open("Architecture") {
            self.scope = required(ev, "name")?.trim().to_owned();
        } else if ev.is_close("Architecture") {
            self.scope.clear();
        } else if ev.is_open("base") {
            if self.used {
                return Err(doc_error(
                    ev,
                    "<base> must come before any require or select",
                ));
            }
            self.base = Some(required(ev, "url")?.to_owned());
        } else if ev.is_open("require") {
            self.used = true;
            let name = required(ev, "name")?.to_owned();
            let version = required(ev, "version")?.to_owned();
            let url = required(ev, "url")?.to_owned();
            let clash =
                |e: &RequireEntry| e.name.eq_ignore_ascii_case(&name) && e.arch_scope == self.scope;
            if self.entries.iter().any(clash) {
                let scope = if self.scope.is_empty() {
                    "all architectures"
                } else {
                    &self.scope
                };
                return Err(doc_error(
                    ev,
                    format!("{name} is required twice for {scope}"),
                ));
            }
            self.entries.push(RequireEntry {
                name,
                version,
                url,
                arch_scope: self.scope.clone(),
                base: self.base.clone(),
            });
        } else {
            return Ok(false);
        }
        Ok(true)
    }

    fn finish(&mut self, out: &mut Vec<RequireEntry>) {
        out.append(&mut self.entries);
    }
}

pub fn parse_configuration(events: &[TagEvent]) -> Result<ConfigurationDoc, ConfigError> {
    let mut collector = RequireCollector::default();
    let mut entries = Vec::new();
    for ev in events {
        collector.handle(ev)?;
    }
    collector.finish(&mut entries);
    Ok(ConfigurationDoc {
        base: collector.base,
        entries,
    })
}

/// Parses a requirements document. Spliced configurations arrive between
/// `<include url=...>` and `</include>`; their scope and base do not leak
/// into the surrounding document. An `<include>` that was not spliced is
/// just recorded.
pub fn parse_requirements(events: &[TagEvent]) -> Result<RequirementsDoc, ConfigError> {
    let mut doc = RequirementsDoc::default();
    let mut outer = RequireCollector::default();
    let mut frames: Vec<RequireCollector> = Vec::new();
    let mut entries = Vec::new();

    for ev in events {
        if ev.is_open("include") {
            let url = required(ev, "url")?.to_owned();
            if frames.is_empty() {
                doc.includes.push(url.clone());
            }
            frames.push(RequireCollector {
                base: Some(url),
                ..Default::default()
            });
            continue;
        }
        if ev.is_close("include") {
            if let Some(mut frame) = frames.pop() {
                frame.finish(&mut entries);
            }
            continue;
        }
        let current = frames.last_mut().unwrap_or(&mut outer);
        if ev.is_open("select") {
            let name = required(ev, "name")?.to_owned();
            current.used = true;
            let scope = current.scope.clone();
            let dup = doc
                .selects
                .iter()
                .any(|s| s.name.eq_ignore_ascii_case(&name) && s.arch_scope == scope);
            if !dup {
                doc.selects.push(Select {
                    name,
                    arch_scope: scope,
                });
            }
            continue;
        }
        current.handle(ev)?;
    }
    while let Some(mut frame) = frames.pop() {
        frame.finish(&mut entries);
    }
    outer.finish(&mut entries);
    doc.base = outer.base;
    doc.inline = ConfigurationDoc {
        base: None,
        entries,
    };
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPin {
    pub name: String,
    pub version: String,
    pub url: String,
    pub base: Option<String>,
}

impl ToolPin {
    pub fn spec_url(&self) -> Result<ResourceUrl, UrlError> {
        let base = self
            .base
            .as_deref()
            .map(|b| ResourceUrl::parse(b, None))
            .transpose()?;
        ResourceUrl::parse(&self.url, base.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIdentity {
    pub url: String,
    pub version: Option<String>,
}

/// The consistent tool set for one architecture, in select order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedConfiguration {
    pub arch: Architecture,
    pub tools: Vec<ToolPin>,
    #[serde(default)]
    pub identity: Option<ConfigIdentity>,
}

impl ResolvedConfiguration {
    pub fn get(&self, name: &str) -> Option<&ToolPin> {
        self.tools
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

/// Like [`resolve_selection`], but selected names without a matching
/// require are returned alongside instead of failing.
pub fn resolve_selection_partial(
    req: &RequirementsDoc,
    configs: &[&ConfigurationDoc],
    arch: &Architecture,
) -> Result<(ResolvedConfiguration, Vec<String>), ConfigError> {
    let mut tools: Vec<ToolPin> = Vec::new();
    let mut missing: Vec<String> = Vec::new();
    for select in req
        .selects
        .iter()
        .filter(|s| match_architecture(&s.arch_scope, arch))
    {
        let seen = |n: &String| n.eq_ignore_ascii_case(&select.name);
        if tools.iter().map(|t| &t.name).any(seen) || missing.iter().any(seen) {
            continue;
        }
        let candidates: Vec<&RequireEntry> = configs
            .iter()
            .flat_map(|c| &c.entries)
            .filter(|e| {
                e.name.eq_ignore_ascii_case(&select.name) && match_architecture(&e.arch_scope, arch)
            })
            .collect();
        let Some(best_len) = candidates.iter().map(|e| e.arch_scope.len()).max() else {
            missing.push(select.name.clone());
            continue;
        };
        let best: Vec<&&RequireEntry> = candidates
            .iter()
            .filter(|e| e.arch_scope.len() == best_len)
            .collect();
        if best.len() > 1 {
            return Err(ConfigError::Ambiguous {
                tool: select.name.clone(),
                arch: arch.canonical(),
                scopes: best.iter().map(|e| e.arch_scope.clone()).collect(),
            });
        }
        let entry = best[0];
        tools.push(ToolPin {
            name: entry.name.clone(),
            version: entry.version.clone(),
            url: entry.url.clone(),
            base: entry.base.clone().or_else(|| req.base.clone()),
        });
    }
    Ok((
        ResolvedConfiguration {
            arch: arch.clone(),
            tools,
            identity: None,
        },
        missing,
    ))
}

/// Picks, for every select whose scope covers `arch`, the most specific
/// matching require. Selects scoped to other architectures are skipped.
pub fn resolve_selection(
    req: &RequirementsDoc,
    configs: &[&ConfigurationDoc],
    arch: &Architecture,
) -> Result<ResolvedConfiguration, ConfigError> {
    let (resolved, missing) = resolve_selection_partial(req, configs, arch)?;
    if !missing.is_empty() {
        return Err(ConfigError::UnknownSelection {
            tools: missing,
            arch: arch.canonical(),
        });
    }
    Ok(resolved)
}
