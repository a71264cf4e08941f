//! Persistent content cache in front of the scheme adapters.
//!
//! Layout: `<root>/<scheme>/<first two hex digits>/<sha256 of key>` holds
//! the bytes and a `.meta` sidecar next to it holds the [`CacheEntry`].
//! Entries are written to a temporary file and renamed into place, so a
//! reader that finds the sidecar always finds complete content. Misses
//! take an exclusive lock on `<hash>.lock` so that concurrent fetches of
//! one key reach the adapter once.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ResourceUrl, SchemeRegistry, UrlError};

pub const UNVERSIONED: &str = "HEAD";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    /// [`ResourceUrl::cache_identity`] of the fetched URL.
    pub url: String,
    /// Requested version, or `HEAD`.
    pub version: String,
}

impl CacheKey {
    pub fn is_versioned(&self) -> bool {
        self.version != UNVERSIONED
    }

    fn digest(&self) -> String {
        hex::encode(Sha256::digest(format!("{}\n{}", self.url, self.version)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub content_path: PathBuf,
    /// Seconds since the Unix epoch.
    pub fetched_at: u64,
    /// Hex SHA-256 of the content.
    pub content_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Scheme registry plus cache: the one way documents are retrieved.
#[derive(Debug)]
pub struct Fetcher {
    schemes: SchemeRegistry,
    root: PathBuf,
    refresh: bool,
    refreshed: Mutex<HashSet<CacheKey>>,
    adapter_calls: AtomicUsize,
    fetch_calls: AtomicUsize,
}

impl Fetcher {
    pub fn new(schemes: SchemeRegistry, cache_root: impl Into<PathBuf>) -> Self {
        Self {
            schemes,
            root: cache_root.into(),
            refresh: false,
            refreshed: Mutex::new(HashSet::new()),
            adapter_calls: AtomicUsize::new(0),
            fetch_calls: AtomicUsize::new(0),
        }
    }

    /// When set, each unversioned (`HEAD`) entry is fetched again once per
    /// `Fetcher` instead of being served from the cache.
    pub fn with_refresh(mut self, refresh: bool) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn schemes(&self) -> &SchemeRegistry {
        &self.schemes
    }

    pub fn cache_root(&self) -> &Path {
        &self.root
    }

    /// Number of times any scheme adapter has been called.
    pub fn adapter_invocations(&self) -> usize {
        self.adapter_calls.load(Ordering::SeqCst)
    }

    /// Number of [`Fetcher::fetch`] calls, hits included.
    pub fn fetch_calls(&self) -> usize {
        self.fetch_calls.load(Ordering::SeqCst)
    }

    pub fn key_for(url: &ResourceUrl, version: Option<&str>) -> CacheKey {
        CacheKey {
            url: url.cache_identity(),
            version: version.or(url.version()).unwrap_or(UNVERSIONED).to_owned(),
        }
    }

    fn entry_paths(&self, url: &ResourceUrl, key: &CacheKey) -> (PathBuf, PathBuf, PathBuf) {
        let digest = key.digest();
        let dir = self
            .root
            .join(url.scheme.to_ascii_lowercase())
            .join(&digest[..2]);
        (
            dir.join(&digest),
            dir.join(format!("{digest}.meta")),
            dir.join(format!("{digest}.lock")),
        )
    }

    fn read_entry(content: &Path, meta: &Path) -> Option<(Vec<u8>, CacheEntry)> {
        let entry: CacheEntry = serde_json::from_slice(&fs::read(meta).ok()?).ok()?;
        let bytes = fs::read(content).ok()?;
        (sha256_hex(&bytes) == entry.content_hash).then_some((bytes, entry))
    }

    fn wants_refresh(&self, key: &CacheKey) -> bool {
        self.refresh && !key.is_versioned() && !self.refreshed.lock().unwrap().contains(key)
    }

    /// Returns the document bytes for `url`, from the cache when possible.
    ///
    /// The version is `version` if given, else the url's `version` query
    /// value, else `HEAD`.
    pub fn fetch(
        &self,
        url: &ResourceUrl,
        version: Option<&str>,
    ) -> Result<(Vec<u8>, CacheEntry), UrlError> {
        self.fetch_calls.fetch_add(1, Ordering::SeqCst);
        let key = Self::key_for(url, version);
        if url.scheme.eq_ignore_ascii_case("file") {
            return self.fetch_direct(url, key);
        }
        let (content_path, meta_path, lock_path) = self.entry_paths(url, &key);

        if !self.wants_refresh(&key) {
            if let Some(hit) = Self::read_entry(&content_path, &meta_path) {
                return Ok(hit);
            }
        }

        let adapter = self.schemes.adapter(url)?;
        let dir = content_path.parent().expect("entry has a parent directory");
        let write_err = |source| UrlError::CacheWrite {
            path: content_path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(write_err)?;
        let lock = File::create(&lock_path).map_err(write_err)?;
        lock.lock().map_err(write_err)?;

        // another fetch of this key may have completed while we waited
        if !self.wants_refresh(&key) {
            if let Some(hit) = Self::read_entry(&content_path, &meta_path) {
                return Ok(hit);
            }
        }

        self.adapter_calls.fetch_add(1, Ordering::SeqCst);
        let requested = key.is_versioned().then_some(key.version.as_str());
        let bytes = adapter.fetch(url, requested)?;

        let entry = CacheEntry {
            key: key.clone(),
            content_path: content_path.clone(),
            fetched_at: now_secs(),
            content_hash: sha256_hex(&bytes),
        };
        let meta = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        write_atomic(dir, &content_path, &bytes).map_err(write_err)?;
        write_atomic(dir, &meta_path, &meta).map_err(write_err)?;
        if !key.is_versioned() {
            self.refreshed.lock().unwrap().insert(key);
        }
        Ok((bytes, entry))
    }
}

impl Fetcher {
    // local files are their own cache; copying them would only go stale
    fn fetch_direct(
        &self,
        url: &ResourceUrl,
        key: CacheKey,
    ) -> Result<(Vec<u8>, CacheEntry), UrlError> {
        let adapter = self.schemes.adapter(url)?;
        self.adapter_calls.fetch_add(1, Ordering::SeqCst);
        let bytes = adapter.fetch(url, None)?;
        let entry = CacheEntry {
            key,
            content_path: url.file_path(),
            fetched_at: now_secs(),
            content_hash: sha256_hex(&bytes),
        };
        Ok((bytes, entry))
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_atomic(dir: &Path, dest: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(dest).map_err(|e| e.error)?;
    Ok(())
}
