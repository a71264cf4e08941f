use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus};
use std::sync::Arc;

use walkdir::WalkDir;

use super::area::{io_err, write_file};
use super::registry::{InstallationRecord, Registry};
use super::{AreaKind, AreaState, BootStrapDoc, ProjectArea, ProjectError, Settings};
use crate::activedoc::{DocTypeRegistry, DocumentLoader, Payload, TypedDocument};
use crate::config::{
    resolve_selection, ConfigIdentity, RequirementsDoc, ResolvedConfiguration, Select, ToolPin,
};
use crate::runtime::{apply_delta, compute_runtime_env, load_app_env_file, EnvDelta, EnvMap};
use crate::site::SiteInfo;
use crate::toolspec::{dependency_order, resolve_tool, FsProber, PromptFn, ResolvedTool, ToolSpec};
use crate::url::{Fetcher, ResourceUrl, SchemeRegistry, UrlError};

fn payload_kind(p: &Payload) -> &'static str {
    match p {
        Payload::Tool(_) => "tool",
        Payload::Configuration(_) => "configuration",
        Payload::Requirements(_) => "requirements",
        Payload::BootStrap(_) => "bootstrap",
        Payload::AppEnv(_) => "application environment",
    }
}

fn wrong(doc: &TypedDocument, expected: &'static str) -> ProjectError {
    ProjectError::WrongPayload {
        url: doc.source.to_string(),
        expected,
        found: payload_kind(&doc.payload).to_owned(),
    }
}

/// Result of a bootstrap: the new central area and what went into it.
#[derive(Debug)]
pub struct Bootstrapped {
    pub area: ProjectArea,
    pub doc: BootStrapDoc,
    pub configuration: ResolvedConfiguration,
    pub tools: Vec<ResolvedTool>,
}

/// Everything a command needs besides its arguments: settings, the site
/// description and a document loader whose memo lives as long as the
/// session.
pub struct Session {
    settings: Settings,
    site: SiteInfo,
    loader: DocumentLoader,
    prober: FsProber,
}

impl Session {
    /// Loads the site file (a missing one is empty) and wires the built-in
    /// schemes.
    pub fn new(settings: Settings) -> Result<Self, ProjectError> {
        let site = SiteInfo::load_or_default(&settings.site_file)?;
        let schemes = SchemeRegistry::with_builtins(site.scheme_command("cvs"));
        Ok(Self::with_schemes(settings, site, schemes))
    }

    pub fn with_schemes(settings: Settings, site: SiteInfo, schemes: SchemeRegistry) -> Self {
        let fetcher =
            Fetcher::new(schemes, settings.cache_dir.clone()).with_refresh(settings.refresh);
        let prober = FsProber::new(&settings.arch.os);
        Self {
            loader: DocumentLoader::new(fetcher, DocTypeRegistry::with_builtins()),
            settings,
            site,
            prober,
        }
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn site(&self) -> &SiteInfo {
        &self.site
    }

    pub fn loader(&self) -> &DocumentLoader {
        &self.loader
    }

    fn activate(&self, url: &ResourceUrl) -> Result<Arc<TypedDocument>, ProjectError> {
        Ok(self.loader.activate(url, url.version())?)
    }

    fn tool_spec(&self, url: &ResourceUrl) -> Result<(Arc<TypedDocument>, ToolSpec), ProjectError> {
        let doc = self.activate(url)?;
        match &doc.payload {
            Payload::Tool(spec) => {
                let spec = spec.clone();
                Ok((doc, spec))
            }
            _ => Err(wrong(&doc, "tool")),
        }
    }

    /// Resolves `pins` externals first. Each record is handed to `sink` as
    /// soon as it exists, so a later failure keeps the earlier ones.
    fn resolve_pins(
        &self,
        pins: &[ToolPin],
        mut already: Vec<ResolvedTool>,
        mut prompt: Option<&mut PromptFn<'_>>,
        mut sink: impl FnMut(&ResolvedTool) -> Result<(), ProjectError>,
    ) -> Result<Vec<ResolvedTool>, ProjectError> {
        let mut specs = Vec::new();
        for pin in pins {
            let url = pin.spec_url()?;
            let (_, spec) = self.tool_spec(&url)?;
            let block = spec.select_version(&pin.version)?.clone();
            specs.push((pin, url, block));
        }
        let deps: Vec<_> = specs
            .iter()
            .map(|(pin, _, block)| (pin.name.to_ascii_lowercase(), block.externals.clone()))
            .collect();
        let mut out = Vec::new();
        for i in dependency_order(&deps)? {
            let (pin, url, block) = &specs[i];
            let mut tool = resolve_tool(
                &pin.name,
                block,
                &self.site,
                &self.prober,
                prompt.as_deref_mut(),
                &already,
            )?;
            tool.spec_url = Some(url.to_string());
            sink(&tool)?;
            already.retain(|t| t.name != tool.name);
            already.push(tool.clone());
            out.push(tool);
        }
        Ok(out)
    }

    /// Fetches the bootstrap file, creates `<dest_root>/<name>_<version>`,
    /// materializes the downloads and resolves the selected tools. The area
    /// stays incomplete until a successful build.
    pub fn bootstrap_install(
        &self,
        url: &ResourceUrl,
        dest_root: &Path,
        prompt: Option<&mut PromptFn<'_>>,
    ) -> Result<Bootstrapped, ProjectError> {
        let doc = self.activate(url)?;
        let Payload::BootStrap(boot) = &doc.payload else {
            return Err(wrong(&doc, "bootstrap"));
        };
        let base = ResourceUrl::parse(boot.base.as_deref().unwrap_or(url.raw()), None)?;

        // Everything that can fail remotely happens before the area exists.
        let mut files = Vec::new();
        for d in &boot.downloads {
            let u = ResourceUrl::parse(&d.url, Some(&base))?;
            let (bytes, _) = self.loader.fetcher().fetch(&u, u.version())?;
            files.push((d.to.clone(), bytes));
        }
        let configuration = match &boot.config_url {
            Some(raw) => self.load_configuration(&ResourceUrl::parse(raw, Some(&base))?)?,
            None => ResolvedConfiguration {
                arch: self.settings.arch.clone(),
                tools: Vec::new(),
                identity: None,
            },
        };

        let root = dest_root.join(format!("{}_{}", boot.name, boot.version));
        if root.exists() {
            return Err(ProjectError::DestinationExists(root));
        }
        let area = ProjectArea::create(&root, AreaKind::Central, &boot.name, &boot.version, None)?;
        let _lock = area.lock()?;
        for (to, bytes) in &files {
            write_file(&root.join(to), bytes)?;
        }
        if let Some(id) = &configuration.identity {
            let mut text = format!("url={}\n", id.url);
            if let Some(v) = &id.version {
                text.push_str(&format!("version={v}\n"));
            }
            write_file(&area.config_dir().join("identity"), text.as_bytes())?;
        }
        let arch = &self.settings.arch;
        area.write_configuration(arch, &configuration)?;
        let tools = self.resolve_pins(&configuration.tools, Vec::new(), prompt, |t| {
            area.write_tool(arch, t)
        })?;
        Ok(Bootstrapped {
            area,
            doc: boot.clone(),
            configuration,
            tools,
        })
    }

    /// A Requirements document selects from its spliced configuration; a
    /// bare Configuration selects everything it pins for this architecture.
    fn load_configuration(&self, url: &ResourceUrl) -> Result<ResolvedConfiguration, ProjectError> {
        let doc = self.activate(url)?;
        let arch = &self.settings.arch;
        let mut resolved = match &doc.payload {
            Payload::Requirements(req) => resolve_selection(req, &[&req.inline], arch)?,
            Payload::Configuration(conf) => {
                let req = RequirementsDoc {
                    selects: conf
                        .entries
                        .iter()
                        .map(|e| Select {
                            name: e.name.clone(),
                            arch_scope: String::new(),
                        })
                        .collect(),
                    ..Default::default()
                };
                resolve_selection(&req, &[conf], arch)?
            }
            _ => return Err(wrong(&doc, "requirements")),
        };
        resolved.identity = Some(ConfigIdentity {
            url: url.to_string(),
            version: doc.version.clone(),
        });
        Ok(resolved)
    }

    /// Registers a complete central area (or any, with `force`). Returns the
    /// record and whether the registry changed.
    pub fn register_install(
        &self,
        area: &ProjectArea,
        force: bool,
    ) -> Result<(InstallationRecord, bool), ProjectError> {
        if area.kind() != AreaKind::Central {
            return Err(ProjectError::NotCentral);
        }
        let _lock = area.lock()?;
        if !force && area.state()? != AreaState::Complete {
            return Err(ProjectError::Incomplete {
                area: area.root().to_owned(),
            });
        }
        let location = fs::canonicalize(area.root()).map_err(io_err(area.root()))?;
        let record = InstallationRecord {
            project: area.project().to_owned(),
            version: area.version().to_owned(),
            arch: self.settings.arch.canonical(),
            location,
        };
        let dest_root = record
            .location
            .parent()
            .unwrap_or(Path::new("/"))
            .to_owned();
        let changed = Registry::register(&self.settings.registry_path(&dest_root), record.clone())?;
        Ok((record, changed))
    }

    pub fn registry(&self) -> Result<Registry, ProjectError> {
        Registry::load(&self.settings.registry_path(&self.settings.install_root))
    }

    /// Creates `<cwd>/<project>_<version>` linked to the registered central
    /// installation, with a copy of its `config/` and nothing else.
    pub fn create_dev_area(
        &self,
        project: &str,
        version: &str,
        cwd: &Path,
    ) -> Result<ProjectArea, ProjectError> {
        let registry = self.registry()?;
        let arch = self.settings.arch.canonical();
        let Some(record) = registry.find(project, version, &arch) else {
            let available: Vec<String> = registry
                .records()
                .iter()
                .filter(|r| r.project == project && r.arch == arch)
                .map(|r| r.version.clone())
                .collect();
            if available.is_empty() {
                let mut known: Vec<String> = registry
                    .records()
                    .iter()
                    .map(|r| r.project.clone())
                    .collect();
                known.sort();
                known.dedup();
                return Err(ProjectError::UnknownProject {
                    project: project.to_owned(),
                    known,
                });
            }
            return Err(ProjectError::UnknownVersion {
                project: project.to_owned(),
                version: version.to_owned(),
                arch,
                available,
            });
        };
        let central =
            ProjectArea::open(&record.location).map_err(|e| ProjectError::BrokenLink {
                link: record.location.clone(),
                message: e.to_string(),
            })?;
        let root = cwd.join(format!("{project}_{version}"));
        if root.exists() {
            return Err(ProjectError::DestinationExists(root));
        }
        let area = ProjectArea::create(
            &root,
            AreaKind::Developer,
            project,
            version,
            Some(&record.location),
        )?;
        copy_tree(&central.config_dir(), &area.config_dir())?;
        Ok(area)
    }

    /// The area's configuration, inherited from the central area.
    pub fn configuration(&self, area: &ProjectArea) -> Result<ResolvedConfiguration, ProjectError> {
        let arch = &self.settings.arch;
        if let Some(c) = area.read_configuration(arch)? {
            return Ok(c);
        }
        if area.kind() == AreaKind::Developer {
            if let Some(c) = area.central()?.read_configuration(arch)? {
                return Ok(c);
            }
        }
        Ok(ResolvedConfiguration {
            arch: arch.clone(),
            tools: Vec::new(),
            identity: None,
        })
    }

    /// Local record if present, else the central one.
    fn active_tool(
        &self,
        area: &ProjectArea,
        central: &ProjectArea,
        name: &str,
    ) -> Result<Option<ResolvedTool>, ProjectError> {
        let arch = &self.settings.arch;
        match area.read_tool(arch, name)? {
            Some(t) => Ok(Some(t)),
            None if area.kind() == AreaKind::Developer => central.read_tool(arch, name),
            None => Ok(None),
        }
    }

    /// Configured tool names, then tools set up outside the configuration.
    fn tool_names(
        &self,
        area: &ProjectArea,
        central: &ProjectArea,
        config: &ResolvedConfiguration,
    ) -> Result<Vec<String>, ProjectError> {
        let arch = &self.settings.arch;
        let mut names: Vec<String> = config
            .tools
            .iter()
            .map(|t| t.name.to_ascii_lowercase())
            .collect();
        let mut extra = area.tool_records(arch)?;
        if area.kind() == AreaKind::Developer {
            extra.extend(central.tool_records(arch)?);
        }
        extra.sort();
        extra.dedup();
        names.extend(extra.into_iter().filter(|n| config.get(n).is_none()));
        Ok(names)
    }

    /// `Tool list for location <central>` and one row per tool with its
    /// active and configured versions.
    pub fn tool_list(&self, area: &ProjectArea) -> Result<String, ProjectError> {
        let central = area.central()?;
        let config = self.configuration(area)?;
        let mut out = format!(
            "Tool list for location {}\n{}\n",
            area.central_location().display(),
            "+".repeat(50)
        );
        for name in self.tool_names(area, &central, &config)? {
            let active = self.active_tool(area, &central, &name)?;
            let default = config.get(&name).map(|p| p.version.clone());
            let version = active
                .map(|t| t.version)
                .or_else(|| default.clone())
                .unwrap_or_default();
            let default = default.unwrap_or_else(|| "none".to_owned());
            out.push_str(&format!(" {name:<20} {version:<10} (default={default})\n"));
        }
        Ok(out)
    }

    /// Re-resolves tools into the area's own records.
    ///
    /// With a URL, `name` and `version` select a block from that spec. With a
    /// name, the configured (or recorded) spec is used, at `version` if
    /// given. With neither, every configured tool is re-resolved and only
    /// records that differ from the inherited ones are written. Returns the
    /// records written.
    pub fn setup_tool(
        &self,
        area: &ProjectArea,
        name: Option<&str>,
        version: Option<&str>,
        url: Option<&ResourceUrl>,
        prompt: Option<&mut PromptFn<'_>>,
    ) -> Result<Vec<ResolvedTool>, ProjectError> {
        let _lock = area.lock()?;
        let arch = &self.settings.arch;
        let central = area.central()?;
        let config = self.configuration(area)?;
        let names = self.tool_names(area, &central, &config)?;
        let others = |skip: Option<&str>| -> Result<Vec<ResolvedTool>, ProjectError> {
            let mut v = Vec::new();
            for n in names
                .iter()
                .filter(|n| skip.is_none_or(|s| !n.eq_ignore_ascii_case(s)))
            {
                v.extend(self.active_tool(area, &central, n)?);
            }
            Ok(v)
        };

        let Some(name) = name else {
            let mut written = Vec::new();
            let resolved = self.resolve_pins(&config.tools, Vec::new(), prompt, |_| Ok(()))?;
            for tool in resolved {
                if self.active_tool(area, &central, &tool.name)?.as_ref() != Some(&tool) {
                    area.write_tool(arch, &tool)?;
                    written.push(tool);
                }
            }
            return Ok(written);
        };

        let pin = match url {
            Some(url) => {
                let version = version.ok_or(ProjectError::SetupArgs)?;
                let (_, spec) = self.tool_spec(url)?;
                if !spec.name.eq_ignore_ascii_case(name) {
                    return Err(ProjectError::SpecMismatch {
                        url: url.to_string(),
                        expected: name.to_owned(),
                        found: spec.name,
                    });
                }
                ToolPin {
                    name: name.to_owned(),
                    version: version.to_owned(),
                    url: url.to_string(),
                    base: None,
                }
            }
            None => {
                let known = config.get(name).cloned().or_else(|| {
                    let rec = self.active_tool(area, &central, name).ok().flatten()?;
                    Some(ToolPin {
                        name: rec.name,
                        version: rec.version,
                        url: rec.spec_url?,
                        base: None,
                    })
                });
                let Some(mut pin) = known else {
                    return Err(ProjectError::UnknownTool {
                        name: name.to_owned(),
                        known: names.clone(),
                    });
                };
                if let Some(v) = version {
                    pin.version = v.to_owned();
                }
                pin
            }
        };
        let already = others(Some(name))?;
        self.resolve_pins(std::slice::from_ref(&pin), already, prompt, |t| {
            area.write_tool(arch, t)
        })
    }

    /// What the active record of `name` says about it.
    pub fn tool_info(&self, area: &ProjectArea, name: &str) -> Result<String, ProjectError> {
        let central = area.central()?;
        let config = self.configuration(area)?;
        let Some(tool) = self.active_tool(area, &central, name)? else {
            return Err(ProjectError::UnknownTool {
                name: name.to_owned(),
                known: self.tool_names(area, &central, &config)?,
            });
        };
        let mut out = format!("Tool: {}\nVersion: {}\n", tool.name, tool.version);
        if let Some(pin) = config.get(name) {
            out.push_str(&format!("Default: {}\n", pin.version));
        }
        if let Some(u) = &tool.spec_url {
            out.push_str(&format!("Specification: {u}\n"));
        }
        if let Some(u) = &tool.info_url {
            out.push_str(&format!("Info: {u}\n"));
        }
        if !tool.lib_names.is_empty() {
            out.push_str(&format!("Libraries: {}\n", tool.lib_names.join(" ")));
        }
        let descriptions: BTreeMap<&str, &str> = tool
            .descriptions
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        if !tool.bindings.is_empty() {
            out.push_str("Variables:\n");
            for b in &tool.bindings {
                out.push_str(&format!("  {}={} [{}]\n", b.name, b.value, b.provenance));
                if let Some(d) = descriptions.get(b.name.as_str()).filter(|d| !d.is_empty()) {
                    out.push_str(&format!("    {d}\n"));
                }
            }
        }
        if !tool.runtime_entries.is_empty() || !tool.runtime_sets.is_empty() {
            out.push_str("Runtime:\n");
            for (n, v) in &tool.runtime_sets {
                out.push_str(&format!("  {n}={v}\n"));
            }
            for (n, v) in &tool.runtime_entries {
                out.push_str(&format!("  {n} += {v}\n"));
            }
        }
        if !tool.externals.is_empty() {
            out.push_str("Externals:\n");
            for e in &tool.externals {
                if e.description.is_empty() {
                    out.push_str(&format!("  {} {}\n", e.name, e.version));
                } else {
                    out.push_str(&format!("  {} {}  {}\n", e.name, e.version, e.description));
                }
            }
        }
        Ok(out)
    }

    /// Active records of every tool in configuration order; fails naming
    /// the configured tools that have none.
    fn active_tools(&self, area: &ProjectArea) -> Result<Vec<ResolvedTool>, ProjectError> {
        let central = area.central()?;
        let config = self.configuration(area)?;
        let mut tools = Vec::new();
        let mut missing = Vec::new();
        for name in self.tool_names(area, &central, &config)? {
            match self.active_tool(area, &central, &name)? {
                Some(t) => tools.push(t),
                None => missing.push(name),
            }
        }
        if !missing.is_empty() {
            return Err(ProjectError::MissingRecords { tools: missing });
        }
        Ok(tools)
    }

    /// The runtime layers of `area`: the base delta, then the application
    /// overlay if `app` is given.
    pub fn runtime_layers(
        &self,
        area: &ProjectArea,
        app: Option<&str>,
    ) -> Result<Vec<EnvDelta>, ProjectError> {
        let contributions: Vec<EnvDelta> = self
            .active_tools(area)?
            .iter()
            .map(ResolvedTool::runtime_contribution)
            .collect();
        let developer = (area.kind() == AreaKind::Developer).then(|| area.root());
        let id = area.area_id();
        let mut layers = vec![compute_runtime_env(
            &contributions,
            area.central_location(),
            developer,
            &self.settings.arch.os,
            &id,
        )?];
        if let Some(app) = app {
            layers.push(load_app_env_file(&area.config_dir(), app, &id)?);
        }
        Ok(layers)
    }

    /// The environment a build runs in: `env` with the runtime delta
    /// applied, plus every tool binding.
    pub fn build_env(&self, area: &ProjectArea, env: &EnvMap) -> Result<EnvMap, ProjectError> {
        let tools = self.active_tools(area)?;
        let mut out = env.clone();
        for layer in self.runtime_layers(area, None)? {
            out = apply_delta(&out, &layer);
        }
        for t in &tools {
            out.extend(t.build_contribution());
        }
        Ok(out)
    }

    /// Runs the site's build command in `tmp/`. A successful build marks
    /// the area complete.
    pub fn build(
        &self,
        area: &ProjectArea,
        args: &[String],
        env: &EnvMap,
    ) -> Result<ExitStatus, ProjectError> {
        let _lock = area.lock()?;
        let command = self
            .site
            .build_command()
            .ok_or(ProjectError::NoBuildCommand)?;
        let mut words = command.split_whitespace();
        let program = words.next().ok_or(ProjectError::NoBuildCommand)?;
        let build_env = self.build_env(area, env)?;
        let program = find_program(program, [build_env.get("PATH"), env.get("PATH")]);
        let tmp = area.root().join("tmp");
        let status = Command::new(&program)
            .args(words)
            .args(args)
            .current_dir(&tmp)
            .env_clear()
            .envs(&build_env)
            .status()
            .map_err(io_err(&program))?;
        if status.success() {
            area.set_state(AreaState::Complete)?;
        }
        Ok(status)
    }
}

/// Parses a command-line location: a URL, or a path taken relative to
/// `cwd`.
pub fn parse_location(raw: &str, cwd: &Path) -> Result<ResourceUrl, UrlError> {
    match ResourceUrl::parse(raw, None) {
        Err(UrlError::MissingScheme(_)) => Ok(ResourceUrl::from_path(&cwd.join(raw))),
        other => other,
    }
}

/// A bare program name is looked up on each search path in turn, then on
/// this process's own `PATH`.
fn find_program<'a>(name: &str, paths: impl IntoIterator<Item = Option<&'a String>>) -> PathBuf {
    if name.contains('/') {
        return PathBuf::from(name);
    }
    let own = std::env::var("PATH").unwrap_or_default();
    let mut dirs: Vec<PathBuf> = paths
        .into_iter()
        .flatten()
        .flat_map(std::env::split_paths)
        .collect();
    dirs.extend(std::env::split_paths(&own));
    dirs.into_iter()
        .map(|dir| dir.join(name))
        .find(|candidate| candidate.is_file())
        .unwrap_or_else(|| PathBuf::from(name))
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), ProjectError> {
    if !from.is_dir() {
        return Ok(());
    }
    for entry in WalkDir::new(from).sort_by_file_name() {
        let entry = entry.map_err(|e| ProjectError::Io {
            path: from.to_owned(),
            source: e.into(),
        })?;
        let rel = entry
            .path()
            .strip_prefix(from)
            .expect("walk stays under its root");
        let dest: PathBuf = to.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&dest).map_err(io_err(&dest))?;
        } else {
            fs::copy(entry.path(), &dest).map_err(io_err(&dest))?;
        }
    }
    Ok(())
}
