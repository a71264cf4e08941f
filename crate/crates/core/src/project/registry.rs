//! The installation registry: one record per line, `project version arch
//! location`. The location is the rest of the line and may contain spaces.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use super::area::{io_err, write_file};
use super::ProjectError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallationRecord {
    pub project: String,
    pub version: String,
    pub arch: String,
    pub location: PathBuf,
}

impl InstallationRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.project,
            self.version,
            self.arch,
            self.location.display()
        )
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let mut parts = line.trim().splitn(4, ' ');
        let (project, version, arch, location) =
            (parts.next()?, parts.next()?, parts.next()?, parts.next()?);
        if [project, version, arch, location]
            .iter()
            .any(|s| s.is_empty())
        {
            return None;
        }
        Some(Self {
            project: project.to_owned(),
            version: version.to_owned(),
            arch: arch.to_owned(),
            location: PathBuf::from(location),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    path: PathBuf,
    records: Vec<InstallationRecord>,
}

impl Registry {
    /// A missing file is an empty registry. Blank lines and `#` comments are
    /// skipped; other malformed lines are errors.
    pub fn load(path: &Path) -> Result<Self, ProjectError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(path)(e)),
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let record =
                InstallationRecord::parse_line(line).ok_or_else(|| ProjectError::BadMeta {
                    path: path.to_owned(),
                    message: format!("line {}: expected `project version arch location`", i + 1),
                })?;
            records.push(record);
        }
        Ok(Self {
            path: path.to_owned(),
            records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[InstallationRecord] {
        &self.records
    }

    pub fn find(&self, project: &str, version: &str, arch: &str) -> Option<&InstallationRecord> {
        self.records
            .iter()
            .find(|r| r.project == project && r.version == version && r.arch == arch)
    }

    /// Adds a record under the registry's lock file. Re-adding an identical
    /// record is a no-op; returns whether the file changed.
    pub fn register(path: &Path, record: InstallationRecord) -> Result<bool, ProjectError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let lock_path = path.with_extension("lock");
        let lock = File::create(&lock_path).map_err(io_err(&lock_path))?;
        lock.lock().map_err(io_err(&lock_path))?;

        let registry = Self::load(path)?;
        if let Some(existing) = registry.find(&record.project, &record.version, &record.arch) {
            if existing.location == record.location {
                return Ok(false);
            }
            return Err(ProjectError::RegistryConflict {
                project: record.project,
                version: record.version,
                arch: record.arch,
                existing: existing.location.clone(),
            });
        }
        let mut text = fs::read_to_string(path).unwrap_or_default();
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&record.to_line());
        text.push('\n');
        write_file(path, text.as_bytes())?;
        Ok(true)
    }
}

/// The installation listing, filtered by exact project name and
/// architecture, in registration order.
pub fn list_installs(records: &[InstallationRecord], project: Option<&str>, arch: &str) -> String {
    let rule = "-".repeat(36);
    let mut out = String::from("Listing installed projects....\n\n");
    out.push_str(&format!(
        "{rule}\n| Project  | Version  |  Location  |\n{rule}\n"
    ));
    for r in records
        .iter()
        .filter(|r| r.arch == arch && project.is_none_or(|p| r.project == p))
    {
        out.push_str(&format!(
            "{} {} --> {}\n",
            r.project,
            r.version,
            r.location.display()
        ));
    }
    out.push_str(&format!("Projects available for platform >> {arch} <<\n"));
    out
}
