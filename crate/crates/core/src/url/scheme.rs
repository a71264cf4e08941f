use std::collections::BTreeMap;
use std::fmt;
use std::process::Command;
use std::sync::Arc;

use super::{ResourceUrl, UrlError};

/// Retrieves the bytes behind a URL for one scheme.
pub trait SchemeAdapter: Send + Sync {
    fn fetch(&self, url: &ResourceUrl, version: Option<&str>) -> Result<Vec<u8>, UrlError>;
}

impl<F> SchemeAdapter for F
where
    F: Fn(&ResourceUrl, Option<&str>) -> Result<Vec<u8>, UrlError> + Send + Sync,
{
    fn fetch(&self, url: &ResourceUrl, version: Option<&str>) -> Result<Vec<u8>, UrlError> {
        self(url, version)
    }
}

/// `file:` URLs read the local filesystem. Versions are ignored.
#[derive(Debug, Default)]
pub struct FileScheme;

impl SchemeAdapter for FileScheme {
    fn fetch(&self, url: &ResourceUrl, _version: Option<&str>) -> Result<Vec<u8>, UrlError> {
        let path = url.file_path();
        std::fs::read(&path).map_err(|source| UrlError::Read { path, source })
    }
}

/// Plain GET for `http:` and `https:`.
pub struct HttpScheme {
    agent: ureq::Agent,
}

impl Default for HttpScheme {
    fn default() -> Self {
        Self {
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

impl SchemeAdapter for HttpScheme {
    fn fetch(&self, url: &ResourceUrl, _version: Option<&str>) -> Result<Vec<u8>, UrlError> {
        let target = url.to_string();
        let transport = |e: ureq::Error| UrlError::Transport {
            url: target.clone(),
            message: e.to_string(),
        };
        let mut response = self.agent.get(&target).call().map_err(transport)?;
        response.body_mut().read_to_vec().map_err(transport)
    }
}

/// Runs an operator-supplied checkout command for version-control schemes.
///
/// The template is split on whitespace into a program and its arguments;
/// no shell is involved. Placeholders are substituted inside each word:
/// `{module}`, `{version}` (the requested version, `HEAD` if none),
/// `{repo}` (the url authority), `{url}`, `{out}` and any other query key
/// such as `{user}`. With `{out}` the command must write the document to
/// that file; without it the document is read from standard output.
#[derive(Debug, Clone)]
pub struct CommandScheme {
    scheme: String,
    template: Option<String>,
}

impl CommandScheme {
    pub fn new(scheme: &str, template: Option<&str>) -> Self {
        Self {
            scheme: scheme.to_owned(),
            template: template.map(str::to_owned),
        }
    }

    fn substitute(word: &str, url: &ResourceUrl, version: &str, out: &str) -> String {
        let mut result = String::with_capacity(word.len());
        let mut rest = word;
        while let Some(start) = rest.find('{') {
            let Some(len) = rest[start..].find('}') else {
                break;
            };
            let key = &rest[start + 1..start + len];
            let value = match key {
                "version" => Some(version.to_owned()),
                "repo" => Some(url.authority.clone()),
                "url" => Some(url.to_string()),
                "out" => Some(out.to_owned()),
                other => url.get(other).map(str::to_owned),
            };
            result.push_str(&rest[..start]);
            match value {
                Some(v) => result.push_str(&v),
                None if key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {}
                None => result.push_str(&rest[start..=start + len]),
            }
            rest = &rest[start + len + 1..];
        }
        result.push_str(rest);
        result
    }
}

impl SchemeAdapter for CommandScheme {
    fn fetch(&self, url: &ResourceUrl, version: Option<&str>) -> Result<Vec<u8>, UrlError> {
        let template = self
            .template
            .as_deref()
            .ok_or_else(|| UrlError::NotConfigured {
                scheme: self.scheme.clone(),
            })?;
        let failed = |message: String| UrlError::Command {
            url: url.to_string(),
            message,
        };
        let version = version.or(url.version()).unwrap_or("HEAD");
        let workdir = tempfile::tempdir().map_err(|e| failed(e.to_string()))?;
        let out_path = workdir.path().join("document");
        let out = out_path.to_string_lossy().into_owned();

        let words: Vec<String> = template
            .split_whitespace()
            .map(|w| Self::substitute(w, url, version, &out))
            .collect();
        let (program, args) = words
            .split_first()
            .ok_or_else(|| failed("empty command template".into()))?;
        let output = Command::new(program)
            .args(args)
            .current_dir(workdir.path())
            .output()
            .map_err(|e| failed(format!("{program}: {e}")))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(failed(format!("{} ({})", output.status, stderr.trim())));
        }
        if template.contains("{out}") {
            std::fs::read(&out_path).map_err(|e| failed(format!("no output written to {out}: {e}")))
        } else {
            Ok(output.stdout)
        }
    }
}

/// Scheme name to adapter map. Names are matched case-insensitively.
#[derive(Clone, Default)]
pub struct SchemeRegistry {
    adapters: BTreeMap<String, Arc<dyn SchemeAdapter>>,
}

impl fmt::Debug for SchemeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.adapters.keys()).finish()
    }
}

impl SchemeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `file`, `http`, `https`, and `cvs` with its alias `vcs` driven by
    /// `cvs_command` (fetches fail with a configuration error when it is
    /// `None`).
    pub fn with_builtins(cvs_command: Option<&str>) -> Self {
        let mut reg = Self::new();
        let http: Arc<dyn SchemeAdapter> = Arc::new(HttpScheme::default());
        let cvs: Arc<dyn SchemeAdapter> = Arc::new(CommandScheme::new("cvs", cvs_command));
        reg.adapters.insert("file".into(), Arc::new(FileScheme));
        reg.adapters.insert("http".into(), http.clone());
        reg.adapters.insert("https".into(), http);
        reg.adapters.insert("cvs".into(), cvs.clone());
        reg.adapters.insert("vcs".into(), cvs);
        reg
    }

    pub fn register(
        &mut self,
        name: &str,
        adapter: impl SchemeAdapter + 'static,
    ) -> Result<(), UrlError> {
        self.register_shared(name, Arc::new(adapter))
    }

    pub fn register_shared(
        &mut self,
        name: &str,
        adapter: Arc<dyn SchemeAdapter>,
    ) -> Result<(), UrlError> {
        let key = name.to_ascii_lowercase();
        if self.adapters.contains_key(&key) {
            return Err(UrlError::DuplicateScheme(name.to_owned()));
        }
        self.adapters.insert(key, adapter);
        Ok(())
    }

    /// Replaces (or adds) the adapter for a scheme.
    pub fn replace(&mut self, name: &str, adapter: impl SchemeAdapter + 'static) {
        self.adapters
            .insert(name.to_ascii_lowercase(), Arc::new(adapter));
    }

    pub fn adapter(&self, url: &ResourceUrl) -> Result<&Arc<dyn SchemeAdapter>, UrlError> {
        self.adapters
            .get(&url.scheme.to_ascii_lowercase())
            .ok_or_else(|| UrlError::UnknownScheme {
                scheme: url.scheme.clone(),
                url: url.to_string(),
            })
    }

    pub fn schemes(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }
}
