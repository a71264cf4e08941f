//! Type activation: URL to bytes to events to a typed, memoized document.
//!
//! `<inline url=...>` and `<include url=...>` are spliced before the type's
//! builder sees the events. An inlined document contributes its body only.
//! An included one must carry its own header with a compatible type; its
//! events arrive bracketed by `<include url=RESOLVED>` and `</include>` so
//! the builder can keep its scope apart.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::config::{
    parse_configuration, parse_requirements, ConfigurationDoc, RequirementsDoc,
    CONFIGURATION_DOC_TYPE, REQUIREMENTS_DOC_TYPE,
};
use crate::markup::{
    self, read_doc_header, splice_with, Attribute, DocHeader, EventKind, MarkupError, SpliceError,
    TagEvent,
};
use crate::project::{parse_bootstrap, BootStrapDoc, BOOTSTRAP_DOC_TYPE};
use crate::runtime::{parse_app_env, EnvDelta, APP_ENV_DOC_TYPE};
use crate::toolspec::{parse_tool_doc, ToolSpec, TOOL_DOC_TYPE};
use crate::url::{Fetcher, ResourceUrl, UrlError};
use crate::version::DottedVersion;

#[derive(Debug, Clone)]
pub enum Payload {
    Tool(ToolSpec),
    Configuration(ConfigurationDoc),
    Requirements(RequirementsDoc),
    BootStrap(BootStrapDoc),
    AppEnv(EnvDelta),
}

#[derive(Debug, Clone)]
pub struct TypedDocument {
    pub header: DocHeader,
    pub source: ResourceUrl,
    pub version: Option<String>,
    pub payload: Payload,
}

pub type BuildError = Box<dyn std::error::Error + Send + Sync>;

/// Builds a payload from a spliced body; the url is the document's own.
pub type DocBuilder =
    Arc<dyn Fn(&[TagEvent], &ResourceUrl) -> Result<Payload, BuildError> + Send + Sync>;

fn chain_text(chain: &[String]) -> String {
    chain.join(" -> ")
}

#[derive(Debug, Error)]
pub enum ActivateError {
    #[error("document type {0} is already registered")]
    DuplicateType(String),
    #[error("{}: unknown document type {doc_type}", chain_text(.chain))]
    UnknownType {
        chain: Vec<String>,
        doc_type: String,
    },
    #[error("{}: {doc_type} version {found} is older than the supported {min}", chain_text(.chain))]
    VersionTooOld {
        chain: Vec<String>,
        doc_type: String,
        found: String,
        min: String,
    },
    #[error("{}: {source}", chain_text(.chain))]
    Fetch {
        chain: Vec<String>,
        #[source]
        source: UrlError,
    },
    #[error("{}: {source}", chain_text(.chain))]
    Markup {
        chain: Vec<String>,
        #[source]
        source: MarkupError,
    },
    #[error("{}: document is not valid UTF-8", chain_text(.chain))]
    Encoding { chain: Vec<String> },
    #[error("{}: {message}", chain_text(.chain))]
    Build { chain: Vec<String>, message: String },
    #[error("include cycle: {}", chain_text(.chain))]
    Cycle { chain: Vec<String> },
    #[error("{}: cannot include a {child} document into a {parent} document", chain_text(.chain))]
    IncompatibleInclude {
        chain: Vec<String>,
        parent: String,
        child: String,
    },
    #[error("{location}: <{tag}> without a url attribute")]
    MissingUrl {
        tag: String,
        location: markup::Location,
    },
}

impl ActivateError {
    /// URLs from the outermost document to the failing one.
    pub fn chain(&self) -> &[String] {
        match self {
            ActivateError::UnknownType { chain, .. }
            | ActivateError::VersionTooOld { chain, .. }
            | ActivateError::Fetch { chain, .. }
            | ActivateError::Markup { chain, .. }
            | ActivateError::Encoding { chain }
            | ActivateError::Build { chain, .. }
            | ActivateError::Cycle { chain }
            | ActivateError::IncompatibleInclude { chain, .. } => chain,
            ActivateError::DuplicateType(_) | ActivateError::MissingUrl { .. } => &[],
        }
    }
}

struct Registration {
    min_version: DottedVersion,
    builder: DocBuilder,
}

#[derive(Default)]
pub struct DocTypeRegistry {
    types: BTreeMap<String, Registration>,
}

impl DocTypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tool, configuration, requirements, bootstrap and app-env documents.
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        let ok = |r: Result<(), ActivateError>| r.expect("builtin types are distinct");
        ok(reg.register(TOOL_DOC_TYPE, "1.0", |events, _| {
            Ok(Payload::Tool(parse_tool_doc(events)?))
        }));
        ok(reg.register(CONFIGURATION_DOC_TYPE, "1.0", |events, url| {
            let mut doc = parse_configuration(events)?;
            let base = doc.base.clone().unwrap_or_else(|| url.to_string());
            doc.fill_base(&base);
            Ok(Payload::Configuration(doc))
        }));
        ok(reg.register(REQUIREMENTS_DOC_TYPE, "2.0", |events, url| {
            let mut doc = parse_requirements(events)?;
            doc.inline.fill_base(&url.to_string());
            Ok(Payload::Requirements(doc))
        }));
        ok(reg.register(BOOTSTRAP_DOC_TYPE, "1.0", |events, url| {
            let mut doc = parse_bootstrap(events)?;
            doc.base.get_or_insert_with(|| url.to_string());
            Ok(Payload::BootStrap(doc))
        }));
        ok(reg.register(APP_ENV_DOC_TYPE, "1.0", |events, _| {
            Ok(Payload::AppEnv(parse_app_env(events, "")?))
        }));
        reg
    }

    pub fn register<F>(
        &mut self,
        doc_type: &str,
        min_version: &str,
        builder: F,
    ) -> Result<(), ActivateError>
    where
        F: Fn(&[TagEvent], &ResourceUrl) -> Result<Payload, BuildError> + Send + Sync + 'static,
    {
        if self.types.contains_key(doc_type) {
            return Err(ActivateError::DuplicateType(doc_type.to_owned()));
        }
        let min_version = min_version.parse().map_err(|_| {
            ActivateError::DuplicateType(format!("{doc_type} (bad minimum version {min_version})"))
        })?;
        self.types.insert(
            doc_type.to_owned(),
            Registration {
                min_version,
                builder: Arc::new(builder),
            },
        );
        Ok(())
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.types.keys().map(String::as_str)
    }
}

type StoreKey = (String, String);
type Slot = Arc<Mutex<Option<Arc<TypedDocument>>>>;

/// Memo of activated documents keyed by (cache identity, version).
#[derive(Default)]
pub struct ObjectStore {
    slots: Mutex<HashMap<StoreKey, Slot>>,
    parses: AtomicUsize,
}

impl ObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Documents tokenized so far, included and inlined ones counted.
    pub fn parse_count(&self) -> usize {
        self.parses.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.slots
            .lock()
            .unwrap()
            .values()
            .filter(|s| s.lock().unwrap().is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slot(&self, key: StoreKey) -> Slot {
        self.slots.lock().unwrap().entry(key).or_default().clone()
    }
}

/// Whether a document of type `child` may be included into `parent`.
fn include_compatible(parent: &str, child: &str) -> bool {
    parent == child || (parent == REQUIREMENTS_DOC_TYPE && child == CONFIGURATION_DOC_TYPE)
}

fn synthetic(kind: EventKind, like: &TagEvent) -> TagEvent {
    TagEvent {
        kind,
        location: like.location.clone(),
    }
}

/// Fetcher, type registry and object store together.
pub struct DocumentLoader {
    fetcher: Fetcher,
    types: DocTypeRegistry,
    store: ObjectStore,
}

impl DocumentLoader {
    pub fn new(fetcher: Fetcher, types: DocTypeRegistry) -> Self {
        Self {
            fetcher,
            types,
            store: ObjectStore::new(),
        }
    }

    pub fn fetcher(&self) -> &Fetcher {
        &self.fetcher
    }

    pub fn store(&self) -> &ObjectStore {
        &self.store
    }

    /// Fetches, splices, checks the header and builds, once per
    /// (url, version).
    pub fn activate(
        &self,
        url: &ResourceUrl,
        version: Option<&str>,
    ) -> Result<Arc<TypedDocument>, ActivateError> {
        let key = Fetcher::key_for(url, version);
        let slot = self.store.slot((key.url, key.version));
        let mut guard = slot.lock().unwrap();
        if let Some(doc) = guard.as_ref() {
            return Ok(doc.clone());
        }

        let mut chain = vec![url.to_string()];
        let (header, body) = self.load(url, version, &mut chain)?;
        let header = header.ok_or_else(|| ActivateError::Markup {
            chain: chain.clone(),
            source: MarkupError::MissingHeader {
                source_id: url.to_string(),
            },
        })?;
        let reg =
            self.types
                .types
                .get(&header.doc_type)
                .ok_or_else(|| ActivateError::UnknownType {
                    chain: chain.clone(),
                    doc_type: header.doc_type.clone(),
                })?;
        if header.doc_version < reg.min_version {
            return Err(ActivateError::VersionTooOld {
                chain,
                doc_type: header.doc_type.clone(),
                found: header.doc_version.to_string(),
                min: reg.min_version.to_string(),
            });
        }
        let payload = (reg.builder)(&body, url).map_err(|e| ActivateError::Build {
            chain: chain.clone(),
            message: e.to_string(),
        })?;
        let doc = Arc::new(TypedDocument {
            header,
            source: url.clone(),
            version: version.map(str::to_owned),
            payload,
        });
        *guard = Some(doc.clone());
        Ok(doc)
    }

    /// Header (if any) and spliced body of one document.
    fn load(
        &self,
        url: &ResourceUrl,
        version: Option<&str>,
        chain: &mut Vec<String>,
    ) -> Result<(Option<DocHeader>, Vec<TagEvent>), ActivateError> {
        let (bytes, _) =
            self.fetcher
                .fetch(url, version)
                .map_err(|source| ActivateError::Fetch {
                    chain: chain.clone(),
                    source,
                })?;
        let text = String::from_utf8(bytes).map_err(|_| ActivateError::Encoding {
            chain: chain.clone(),
        })?;
        self.store.parses.fetch_add(1, Ordering::SeqCst);
        let mut events =
            markup::tokenize(&text, &url.to_string()).map_err(|source| ActivateError::Markup {
                chain: chain.clone(),
                source,
            })?;

        let header = match events.iter().position(|e| !e.is_blank_text()) {
            Some(i) if events[i].is_open("doc") => {
                let h = read_doc_header(&events).map_err(|source| ActivateError::Markup {
                    chain: chain.clone(),
                    source,
                })?;
                events.drain(..=i);
                Some(h)
            }
            _ => None,
        };

        // relative references resolve against <base> if the document has one
        let base = match events
            .iter()
            .find(|e| e.is_open("base"))
            .and_then(|e| e.attr("url"))
        {
            Some(raw) => {
                ResourceUrl::parse(raw, Some(url)).map_err(|source| ActivateError::Fetch {
                    chain: chain.clone(),
                    source,
                })?
            }
            None => url.clone(),
        };

        let parent_type = header.as_ref().map(|h| h.doc_type.clone());
        let spliced = splice_with(events, &["inline", "include"], |req| {
            let child_url = ResourceUrl::parse(req.url, Some(&base)).map_err(|source| {
                ActivateError::Fetch {
                    chain: chain.clone(),
                    source,
                }
            })?;
            let shown = child_url.to_string();
            chain.push(shown.clone());
            if chain[..chain.len() - 1].contains(&shown) {
                return Err(ActivateError::Cycle {
                    chain: chain.clone(),
                });
            }
            let (child_header, child_body) = self.load(&child_url, None, chain)?;
            let result = if req.tag.eq_ignore_ascii_case("include") {
                let child_type =
                    child_header
                        .map(|h| h.doc_type)
                        .ok_or_else(|| ActivateError::Markup {
                            chain: chain.clone(),
                            source: MarkupError::MissingHeader {
                                source_id: shown.clone(),
                            },
                        })?;
                if let Some(parent) = &parent_type {
                    if !include_compatible(parent, &child_type) {
                        return Err(ActivateError::IncompatibleInclude {
                            chain: chain.clone(),
                            parent: parent.clone(),
                            child: child_type,
                        });
                    }
                }
                let open = synthetic(
                    EventKind::Open {
                        name: req.tag.to_owned(),
                        attrs: vec![Attribute {
                            key: "url".into(),
                            value: shown,
                        }],
                    },
                    req.event,
                );
                let close = synthetic(
                    EventKind::Close {
                        name: req.tag.to_owned(),
                    },
                    req.event,
                );
                std::iter::once(open)
                    .chain(child_body)
                    .chain(std::iter::once(close))
                    .collect()
            } else {
                child_body
            };
            chain.pop();
            Ok(result)
        })
        .map_err(|e| match e {
            SpliceError::Resolve { error, .. } => error,
            SpliceError::Cycle { chain } => ActivateError::Cycle { chain },
            SpliceError::MissingUrl { tag, location } => {
                ActivateError::MissingUrl { tag, location }
            }
        })?;
        Ok((header, spliced))
    }
}
