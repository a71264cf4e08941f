use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use super::{ExternalRef, ToolVersionBlock, VarType};
use crate::runtime::EnvDelta;
use crate::site::SiteInfo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SiteFile,
    Probe,
    Prompt,
    Substitution,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::SiteFile => "site-file",
            Provenance::Probe => "probe",
            Provenance::Prompt => "prompt",
            Provenance::Substitution => "substitution",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub name: String,
    pub value: String,
    pub provenance: Provenance,
}

/// A tool version bound to concrete local values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedTool {
    pub name: String,
    pub version: String,
    pub bindings: Vec<Binding>,
    /// `Runtime_path` variables with their expanded values.
    pub runtime_entries: Vec<(String, String)>,
    /// Plain variables explicitly exported to the runtime environment.
    #[serde(default)]
    pub runtime_sets: Vec<(String, String)>,
    pub lib_names: Vec<String>,
    #[serde(default)]
    pub externals: Vec<ExternalRef>,
    #[serde(default)]
    pub descriptions: Vec<(String, String)>,
    #[serde(default)]
    pub info_url: Option<String>,
    /// Where the specification came from.
    #[serde(default)]
    pub spec_url: Option<String>,
}

impl ResolvedTool {
    pub fn binding(&self, name: &str) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.name == name)
    }

    /// Runtime paths become prepends, exported plain variables assignments.
    /// Everything else stays in the build environment.
    pub fn runtime_contribution(&self) -> EnvDelta {
        let mut delta = EnvDelta::default();
        for (name, value) in &self.runtime_sets {
            // names come from a parsed block, where a clash is impossible
            let _ = delta.set(name, value);
        }
        for (name, value) in &self.runtime_entries {
            let _ = delta.prepend(name, value);
        }
        delta
    }

    /// Bindings as plain assignments, for builds. Runtime paths are left
    /// to [`Self::runtime_contribution`], which prepends them instead.
    pub fn build_contribution(&self) -> Vec<(String, String)> {
        self.bindings
            .iter()
            .filter(|b| !self.runtime_entries.iter().any(|(n, _)| *n == b.name))
            .map(|b| (b.name.clone(), b.value.clone()))
            .collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("cannot resolve {var} for tool {tool}: set tool.{tool}.{var} in the site file{}", hint_suffix(.hint))]
    Unresolvable {
        tool: String,
        var: String,
        hint: String,
    },
    #[error("undefined reference ${reference} in {var} of tool {tool}")]
    UndefinedReference {
        tool: String,
        var: String,
        reference: String,
    },
    #[error("malformed reference in {var} of tool {tool}: {value}")]
    BadReference {
        tool: String,
        var: String,
        value: String,
    },
    #[error("tool {tool} needs {external} {version}, which has not been set up")]
    MissingExternal {
        tool: String,
        external: String,
        version: String,
    },
    #[error("tool {tool} needs {external} {required}, but {external} {found} is set up")]
    ExternalVersionMismatch {
        tool: String,
        external: String,
        required: String,
        found: String,
    },
    #[error("external dependency cycle: {}", chain.join(" -> "))]
    Cycle { chain: Vec<String> },
}

fn hint_suffix(hint: &str) -> String {
    if hint.is_empty() {
        String::new()
    } else {
        format!(" (hint: {hint})")
    }
}

/// Locates library directories for `type=lib` variables.
pub trait LibProber {
    fn find_lib_dir(&self, roots: &[PathBuf], libs: &[String]) -> Option<PathBuf>;
}

/// Walks the search roots in order, entries sorted by name, and returns the
/// first directory holding a file named like one of the libraries under the
/// platform conventions.
#[derive(Debug, Clone)]
pub struct FsProber {
    darwin: bool,
}

impl FsProber {
    pub fn new(os: &str) -> Self {
        Self {
            darwin: os.eq_ignore_ascii_case("darwin"),
        }
    }

    pub fn matches(&self, file_name: &str, lib: &str) -> bool {
        let Some(rest) = file_name
            .strip_prefix("lib")
            .and_then(|r| r.strip_prefix(lib))
        else {
            return false;
        };
        if rest == ".a" {
            return true;
        }
        if self.darwin {
            rest == ".dylib" || (rest.starts_with('.') && rest.ends_with(".dylib"))
        } else {
            rest == ".so" || rest.strip_prefix(".so.").is_some_and(|v| !v.is_empty())
        }
    }
}

impl LibProber for FsProber {
    fn find_lib_dir(&self, roots: &[PathBuf], libs: &[String]) -> Option<PathBuf> {
        if libs.is_empty() {
            return None;
        }
        for root in roots {
            let walk = WalkDir::new(root)
                .follow_links(true)
                .max_depth(8)
                .sort_by_file_name();
            for entry in walk.into_iter().filter_map(Result::ok) {
                if entry.file_type().is_dir() {
                    continue;
                }
                let name = entry.file_name().to_string_lossy();
                if libs.iter().any(|lib| self.matches(&name, lib)) {
                    return entry.path().parent().map(Path::to_path_buf);
                }
            }
        }
        None
    }
}

/// What the interactive callback is asked for.
#[derive(Debug, Clone)]
pub struct PromptRequest<'a> {
    pub tool: &'a str,
    pub version: &'a str,
    pub var: &'a str,
    pub description: &'a str,
}

pub type PromptFn<'a> = dyn FnMut(&PromptRequest) -> Option<String> + 'a;

/// Expands `$NAME` and `${NAME}`; `lookup` returns `None` for unknown names.
fn expand(raw: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, Option<String>> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        let (name, tail) = if let Some(braced) = after.strip_prefix('{') {
            let end = braced.find('}').ok_or(None)?;
            (&braced[..end], &braced[end + 1..])
        } else {
            let end = after
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(after.len());
            (&after[..end], &after[end..])
        };
        let valid = name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            return Err(None);
        }
        out.push_str(&lookup(name).ok_or_else(|| Some(name.to_owned()))?);
        rest = tail;
    }
    out.push_str(rest);
    Ok(out)
}

/// Binds a tool version block to the local system.
pub struct Resolver<'a> {
    site: &'a SiteInfo,
    prober: &'a dyn LibProber,
    prompt: Option<&'a mut PromptFn<'a>>,
}

impl<'a> Resolver<'a> {
    pub fn new(
        site: &'a SiteInfo,
        prober: &'a dyn LibProber,
        prompt: Option<&'a mut PromptFn<'a>>,
    ) -> Self {
        Self {
            site,
            prober,
            prompt,
        }
    }

    /// Client variables are bound from the site file, then by probing
    /// (`type=lib` only), then by prompting. Derived variables are
    /// expanded against what is bound so far and the externals' bindings.
    pub fn resolve(
        &mut self,
        tool: &str,
        block: &ToolVersionBlock,
        already: &[ResolvedTool],
    ) -> Result<ResolvedTool, ResolveError> {
        let tool = tool.to_ascii_lowercase();
        let mut externals = Vec::new();
        for ext in &block.externals {
            let found = already
                .iter()
                .find(|r| r.name.eq_ignore_ascii_case(&ext.name))
                .ok_or_else(|| ResolveError::MissingExternal {
                    tool: tool.clone(),
                    external: ext.name.clone(),
                    version: ext.version.clone(),
                })?;
            if found.version != ext.version {
                return Err(ResolveError::ExternalVersionMismatch {
                    tool: tool.clone(),
                    external: ext.name.clone(),
                    required: ext.version.clone(),
                    found: found.version.clone(),
                });
            }
            externals.push(found);
        }

        let mut bindings: Vec<Binding> = Vec::new();
        for decl in block.variables() {
            let expand_here = |raw: &str, bindings: &[Binding]| {
                let lookup = |name: &str| {
                    bindings
                        .iter()
                        .chain(externals.iter().flat_map(|e| e.bindings.iter()))
                        .find(|b| b.name == name)
                        .map(|b| b.value.clone())
                };
                expand(raw, &lookup).map_err(|e| match e {
                    Some(reference) => ResolveError::UndefinedReference {
                        tool: tool.clone(),
                        var: decl.name.clone(),
                        reference,
                    },
                    None => ResolveError::BadReference {
                        tool: tool.clone(),
                        var: decl.name.clone(),
                        value: raw.to_owned(),
                    },
                })
            };

            let (value, provenance) = match &decl.value {
                Some(raw) if !decl.client => {
                    (expand_here(raw, &bindings)?, Provenance::Substitution)
                }
                _ => {
                    if let Some(v) = self.site.tool_value(&tool, &decl.name) {
                        (expand_here(v, &bindings)?, Provenance::SiteFile)
                    } else if let Some(dir) = (decl.var_type == VarType::Lib)
                        .then(|| {
                            self.prober
                                .find_lib_dir(&self.site.lib_roots(), &block.libs)
                        })
                        .flatten()
                    {
                        (dir.to_string_lossy().into_owned(), Provenance::Probe)
                    } else if let Some(answer) = self.prompt.as_mut().and_then(|p| {
                        p(&PromptRequest {
                            tool: &tool,
                            version: &block.version,
                            var: &decl.name,
                            description: &decl.description,
                        })
                    }) {
                        (expand_here(&answer, &bindings)?, Provenance::Prompt)
                    } else {
                        return Err(ResolveError::Unresolvable {
                            tool: tool.clone(),
                            var: decl.name.clone(),
                            hint: decl.description.clone(),
                        });
                    }
                }
            };
            bindings.push(Binding {
                name: decl.name.clone(),
                value,
                provenance,
            });
        }

        let value_of = |name: &str| {
            bindings
                .iter()
                .find(|b| b.name == name)
                .map(|b| b.value.clone())
        };
        let runtime_entries = block
            .variables()
            .filter(|v| v.var_type == VarType::RuntimePath)
            .filter_map(|v| value_of(&v.name).map(|val| (v.name.clone(), val)))
            .collect();
        let runtime_sets = block
            .variables()
            .filter(|v| v.exported && v.var_type != VarType::RuntimePath)
            .filter_map(|v| value_of(&v.name).map(|val| (v.name.clone(), val)))
            .collect();
        let descriptions = block
            .variables()
            .filter(|v| !v.description.is_empty())
            .map(|v| (v.name.clone(), v.description.clone()))
            .collect();

        Ok(ResolvedTool {
            name: tool,
            version: block.version.clone(),
            bindings,
            runtime_entries,
            runtime_sets,
            lib_names: block.libs.clone(),
            externals: block.externals.clone(),
            descriptions,
            info_url: block.info_url.clone(),
            spec_url: None,
        })
    }
}

/// One-shot form of [`Resolver::resolve`].
pub fn resolve_tool(
    tool: &str,
    block: &ToolVersionBlock,
    site: &SiteInfo,
    prober: &dyn LibProber,
    prompt: Option<&mut PromptFn<'_>>,
    already: &[ResolvedTool],
) -> Result<ResolvedTool, ResolveError> {
    match prompt {
        Some(p) => Resolver::new(site, prober, Some(p)).resolve(tool, block, already),
        None => Resolver::new(site, prober, None).resolve(tool, block, already),
    }
}

/// Orders tools so that every external comes before its users, keeping the
/// given order otherwise. Externals outside the set are ignored here; they
/// surface as missing when the tool is resolved.
pub fn dependency_order(tools: &[(String, Vec<ExternalRef>)]) -> Result<Vec<usize>, ResolveError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Visiting,
        Done,
    }
    fn visit(
        i: usize,
        tools: &[(String, Vec<ExternalRef>)],
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
        order: &mut Vec<usize>,
    ) -> Result<(), ResolveError> {
        match marks[i] {
            Mark::Done => return Ok(()),
            Mark::Visiting => {
                let start = stack.iter().position(|&s| s == i).unwrap_or(0);
                let mut chain: Vec<String> =
                    stack[start..].iter().map(|&s| tools[s].0.clone()).collect();
                chain.push(tools[i].0.clone());
                return Err(ResolveError::Cycle { chain });
            }
            Mark::New => {}
        }
        marks[i] = Mark::Visiting;
        stack.push(i);
        for ext in &tools[i].1 {
            if let Some(j) = tools
                .iter()
                .position(|(n, _)| n.eq_ignore_ascii_case(&ext.name))
            {
                visit(j, tools, marks, stack, order)?;
            }
        }
        stack.pop();
        marks[i] = Mark::Done;
        order.push(i);
        Ok(())
    }

    let mut marks = vec![Mark::New; tools.len()];
    let mut order = Vec::with_capacity(tools.len());
    for i in 0..tools.len() {
        visit(i, tools, &mut marks, &mut Vec::new(), &mut order)?;
    }
    Ok(order)
}
