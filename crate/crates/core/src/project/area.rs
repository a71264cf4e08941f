use std::fmt;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::ProjectError;
use crate::config::{Architecture, ResolvedConfiguration};
use crate::toolspec::ResolvedTool;

/// Subdirectories every area has.
pub const LAYOUT: [&str; 7] = ["src", "config", "lib", "bin", "logs", "tmp", ".SCRAM"];

const META_FILE: &str = "area";
const LINK_FILE: &str = "Link";
const STATE_FILE: &str = "state";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaKind {
    Central,
    Developer,
}

impl fmt::Display for AreaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AreaKind::Central => "central",
            AreaKind::Developer => "developer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaState {
    Incomplete,
    Complete,
}

impl fmt::Display for AreaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AreaState::Incomplete => "incomplete",
            AreaState::Complete => "complete",
        })
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ProjectError + '_ {
    move |source| ProjectError::Io {
        path: path.to_owned(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ProjectError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| ProjectError::Io {
        path: path.to_owned(),
        source: e.error,
    })?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, ProjectError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| ProjectError::BadMeta {
                path: path.to_owned(),
                message: e.to_string(),
            }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ProjectError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("records serialize");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn record_file_name(tool: &str) -> Result<String, ProjectError> {
    let name = tool.to_ascii_lowercase();
    if name.is_empty() || name.starts_with('.') || name.contains(['/', '\\']) {
        return Err(ProjectError::BadToolName(tool.to_owned()));
    }
    Ok(name)
}

/// Held while a mutating command runs; released on drop.
#[derive(Debug)]
pub struct AreaLock {
    _file: File,
}

/// A central or developer area on disk. Nothing in `.SCRAM` refers to the
/// area's own location, so the tree can be moved; only a developer area's
/// link to its central installation is absolute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectArea {
    root: PathBuf,
    kind: AreaKind,
    project: String,
    version: String,
    link: Option<PathBuf>,
}

impl ProjectArea {
    /// Creates the directory layout and metadata. Central areas start
    /// incomplete.
    pub fn create(
        root: &Path,
        kind: AreaKind,
        project: &str,
        version: &str,
        link: Option<&Path>,
    ) -> Result<Self, ProjectError> {
        for dir in LAYOUT {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let area = Self {
            root: root.to_owned(),
            kind,
            project: project.to_owned(),
            version: version.to_owned(),
            link: link.map(Path::to_path_buf),
        };
        let meta = format!("kind={kind}\nproject={project}\nversion={version}\n");
        write_file(&area.scram_dir().join(META_FILE), meta.as_bytes())?;
        if let Some(link) = link {
            write_file(
                &area.scram_dir().join(LINK_FILE),
                format!("{}\n", link.display()).as_bytes(),
            )?;
        }
        let state = match kind {
            AreaKind::Central => AreaState::Incomplete,
            AreaKind::Developer => AreaState::Complete,
        };
        area.set_state(state)?;
        Ok(area)
    }

    pub fn open(root: &Path) -> Result<Self, ProjectError> {
        let meta_path = root.join(".SCRAM").join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let bad = |message: &str| ProjectError::BadMeta {
            path: meta_path.clone(),
            message: message.to_owned(),
        };
        let field = |key: &str| {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_owned())
        };
        let kind = match field("kind").as_deref() {
            Some("central") => AreaKind::Central,
            Some("developer") => AreaKind::Developer,
            _ => return Err(bad("missing or unknown kind")),
        };
        let project = field("project")
            .filter(|p| !p.is_empty())
            .ok_or_else(|| bad("missing project"))?;
        let version = field("version")
            .filter(|v| !v.is_empty())
            .ok_or_else(|| bad("missing version"))?;
        let link = match kind {
            AreaKind::Central => None,
            AreaKind::Developer => {
                let link_path = root.join(".SCRAM").join(LINK_FILE);
                let raw = fs::read_to_string(&link_path).map_err(io_err(&link_path))?;
                Some(PathBuf::from(raw.trim()))
            }
        };
        Ok(Self {
            root: root.to_owned(),
            kind,
            project,
            version,
            link,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn kind(&self) -> AreaKind {
        self.kind
    }

    pub fn project(&self) -> &str {
        &self.project
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn link(&self) -> Option<&Path> {
        self.link.as_deref()
    }

    /// `project/version`, stable across moves.
    pub fn area_id(&self) -> String {
        format!("{}/{}", self.project, self.version)
    }

    /// The central installation this area belongs to.
    pub fn central_location(&self) -> &Path {
        self.link.as_deref().unwrap_or(&self.root)
    }

    pub fn central(&self) -> Result<ProjectArea, ProjectError> {
        match &self.link {
            None => Ok(self.clone()),
            Some(link) => ProjectArea::open(link).map_err(|e| ProjectError::BrokenLink {
                link: link.clone(),
                message: e.to_string(),
            }),
        }
    }

    pub fn scram_dir(&self) -> PathBuf {
        self.root.join(".SCRAM")
    }

    pub fn config_dir(&self) -> PathBuf {
        self.root.join("config")
    }

    pub fn arch_dir(&self, arch: &Architecture) -> PathBuf {
        self.scram_dir().join(arch.canonical())
    }

    pub fn tools_dir(&self, arch: &Architecture) -> PathBuf {
        self.arch_dir(arch).join("tools")
    }

    pub fn state(&self) -> Result<AreaState, ProjectError> {
        let path = self.scram_dir().join(STATE_FILE);
        match fs::read_to_string(&path) {
            Ok(s) if s.trim() == "complete" => Ok(AreaState::Complete),
            Ok(_) => Ok(AreaState::Incomplete),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(AreaState::Incomplete),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn set_state(&self, state: AreaState) -> Result<(), ProjectError> {
        write_file(
            &self.scram_dir().join(STATE_FILE),
            format!("{state}\n").as_bytes(),
        )
    }

    /// Advisory lock for mutating commands; fails at once if held. The
    /// lock is taken on the metadata file, so locking leaves no trace.
    pub fn lock(&self) -> Result<AreaLock, ProjectError> {
        let path = self.scram_dir().join(META_FILE);
        let file = File::open(&path).map_err(io_err(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(AreaLock { _file: file }),
            Err(std::fs::TryLockError::WouldBlock) => Err(ProjectError::Busy {
                area: self.root.clone(),
            }),
            Err(std::fs::TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }

    /// This area's own record, not consulting the central area.
    pub fn read_tool(
        &self,
        arch: &Architecture,
        name: &str,
    ) -> Result<Option<ResolvedTool>, ProjectError> {
        read_json(&self.tools_dir(arch).join(record_file_name(name)?))
    }

    pub fn write_tool(&self, arch: &Architecture, tool: &ResolvedTool) -> Result<(), ProjectError> {
        write_json(
            &self.tools_dir(arch).join(record_file_name(&tool.name)?),
            tool,
        )
    }

    /// Names of this area's own tool records, sorted.
    pub fn tool_records(&self, arch: &Architecture) -> Result<Vec<String>, ProjectError> {
        let dir = self.tools_dir(arch);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut names = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn read_configuration(
        &self,
        arch: &Architecture,
    ) -> Result<Option<ResolvedConfiguration>, ProjectError> {
        read_json(&self.arch_dir(arch).join("configuration.json"))
    }

    pub fn write_configuration(
        &self,
        arch: &Architecture,
        config: &ResolvedConfiguration,
    ) -> Result<(), ProjectError> {
        write_json(&self.arch_dir(arch).join("configuration.json"), config)
    }
}

/// The nearest enclosing area of `cwd`.
pub fn area_context(cwd: &Path) -> Result<ProjectArea, ProjectError> {
    cwd.ancestors()
        .find(|dir| dir.join(".SCRAM").join(META_FILE).is_file())
        .map(ProjectArea::open)
        .unwrap_or_else(|| {
            Err(ProjectError::NotInArea {
                cwd: cwd.to_owned(),
            })
        })
}
