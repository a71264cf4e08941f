#![allow(dead_code)]

pub mod shell_sim;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use scram_core::url::{ResourceUrl, SchemeAdapter, UrlError};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name))
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

/// Serves documents by the `module` query value (or the authority when
/// there is none), counting every call.
#[derive(Clone, Default)]
pub struct StubScheme {
    docs: Arc<Mutex<BTreeMap<String, Vec<u8>>>>,
    calls: Arc<AtomicUsize>,
}

impl StubScheme {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, key: &str, body: impl Into<Vec<u8>>) -> &Self {
        self.docs
            .lock()
            .unwrap()
            .insert(key.to_owned(), body.into());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn key(url: &ResourceUrl) -> String {
        url.get("module")
            .map(str::to_owned)
            .unwrap_or_else(|| url.authority.clone())
    }
}

impl SchemeAdapter for StubScheme {
    fn fetch(&self, url: &ResourceUrl, _version: Option<&str>) -> Result<Vec<u8>, UrlError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = Self::key(url);
        self.docs
            .lock()
            .unwrap()
            .get(&key)
            .cloned()
            .ok_or_else(|| UrlError::Command {
                url: url.to_string(),
                message: format!("stub has no document {key}"),
            })
    }
}

pub fn env_map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
