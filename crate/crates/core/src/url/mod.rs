//! Document URLs, pluggable retrieval schemes and the content cache.
//!
//! URLs are deliberately loose: `cvs:?module=SCRAMToolBox/CXX/gcc3` is a
//! valid URL whose repository comes from the enclosing document's
//! `<base url=...>`. Whitespace inside a URL is ignored, since documents
//! wrap long `base` URLs over several lines.

mod cache;
mod scheme;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use cache::{CacheEntry, CacheKey, Fetcher};
pub use scheme::{CommandScheme, FileScheme, HttpScheme, SchemeAdapter, SchemeRegistry};

/// Query keys that identify the caller rather than the resource. They reach
/// the adapter but are left out of cache keys.
const IDENTITY_KEYS: [&str; 2] = ["auth", "user"];

#[derive(Debug, Error)]
pub enum UrlError {
    #[error("'{0}' has no scheme and no base url is in effect")]
    MissingScheme(String),
    #[error("empty url")]
    Empty,
    #[error("scheme '{0}' is already registered")]
    DuplicateScheme(String),
    #[error("unknown url scheme '{scheme}' in {url}")]
    UnknownScheme { scheme: String, url: String },
    #[error("scheme '{scheme}' is not configured (set scheme.{scheme}.command in the site file)")]
    NotConfigured { scheme: String },
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("fetching {url}: {message}")]
    Transport { url: String, message: String },
    #[error("command for {url} failed: {message}")]
    Command { url: String, message: String },
    #[error("writing cache entry {path}: {source}")]
    CacheWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A parsed document URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceUrl {
    pub scheme: String,
    /// Everything between `scheme:` (plus an optional `//`) and `?`.
    pub authority: String,
    /// Whether the authority was written after `//`.
    pub slashes: bool,
    pub query: Vec<(String, String)>,
    pub fragment: Option<String>,
    raw: String,
}

fn split_scheme(s: &str) -> Option<(&str, &str)> {
    let (scheme, rest) = s.split_once(':')?;
    let mut chars = scheme.chars();
    let valid = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    valid.then_some((scheme, rest))
}

fn parse_query(q: &str) -> Vec<(String, String)> {
    q.split('&')
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (k.to_owned(), v.to_owned()),
            None => (p.to_owned(), String::new()),
        })
        .collect()
}

/// Own pairs first, then the base's defaults for keys not overridden.
fn merge_query(own: Vec<(String, String)>, base: &[(String, String)]) -> Vec<(String, String)> {
    let mut merged = own;
    for (k, v) in base {
        if !merged.iter().any(|(mk, _)| mk == k) {
            merged.push((k.clone(), v.clone()));
        }
    }
    merged
}

impl ResourceUrl {
    /// Parses `raw`, resolving it against `base` when it is scheme-relative
    /// (`cvs:?module=M` under a `cvs://...` base) or has no scheme at all
    /// (a path relative to the base's directory).
    pub fn parse(raw: &str, base: Option<&ResourceUrl>) -> Result<Self, UrlError> {
        let cleaned: String = raw.chars().filter(|c| !c.is_ascii_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(UrlError::Empty);
        }
        let (body, fragment) = match cleaned.split_once('#') {
            Some((b, f)) => (b, Some(f.to_owned())),
            None => (cleaned.as_str(), None),
        };

        let (scheme, rest) = match split_scheme(body) {
            Some((s, r)) => (Some(s.to_owned()), r),
            None => (None, body),
        };
        let (slashes, rest) = match rest.strip_prefix("//") {
            Some(r) => (true, r),
            None => (false, rest),
        };
        let (authority, query) = match rest.split_once('?') {
            Some((a, q)) => (a.to_owned(), parse_query(q)),
            None => (rest.to_owned(), Vec::new()),
        };

        let url = match (scheme, base) {
            (Some(scheme), Some(base))
                if authority.is_empty() && base.scheme.eq_ignore_ascii_case(&scheme) =>
            {
                ResourceUrl {
                    scheme,
                    authority: base.authority.clone(),
                    slashes: base.slashes,
                    query: merge_query(query, &base.query),
                    fragment,
                    raw: raw.to_owned(),
                }
            }
            (Some(scheme), _) => ResourceUrl {
                scheme,
                authority,
                slashes,
                query,
                fragment,
                raw: raw.to_owned(),
            },
            (None, Some(base)) => {
                let authority = if authority.starts_with('/') {
                    authority
                } else {
                    let dir = base
                        .authority
                        .rfind('/')
                        .map_or("", |i| &base.authority[..=i]);
                    format!("{dir}{authority}")
                };
                ResourceUrl {
                    scheme: base.scheme.clone(),
                    authority,
                    slashes: base.slashes,
                    query: merge_query(query, &base.query),
                    fragment,
                    raw: raw.to_owned(),
                }
            }
            (None, None) => return Err(UrlError::MissingScheme(raw.to_owned())),
        };
        Ok(url)
    }

    /// A `file:` URL for a local path.
    pub fn from_path(path: &std::path::Path) -> Self {
        let authority = path.to_string_lossy().into_owned();
        ResourceUrl {
            scheme: "file".into(),
            raw: format!("file:{authority}"),
            authority,
            slashes: false,
            query: Vec::new(),
            fragment: None,
        }
    }

    /// The string this URL was parsed from.
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.query
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// The version tag carried in the query, if any.
    pub fn version(&self) -> Option<&str> {
        self.get("version").filter(|v| !v.is_empty())
    }

    pub fn file_path(&self) -> PathBuf {
        PathBuf::from(&self.authority)
    }

    /// Normalized identity used for caching: query pairs sorted, identity
    /// keys and the version tag dropped (the version is keyed separately).
    pub fn cache_identity(&self) -> String {
        let mut pairs: Vec<_> = self
            .query
            .iter()
            .filter(|(k, _)| k != "version" && !IDENTITY_KEYS.contains(&k.as_str()))
            .collect();
        pairs.sort();
        let query = pairs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("&");
        format!(
            "{}:{}{}?{}",
            self.scheme.to_ascii_lowercase(),
            if self.slashes { "//" } else { "" },
            self.authority,
            query
        )
    }
}

impl fmt::Display for ResourceUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.scheme)?;
        if self.slashes {
            f.write_str("//")?;
        }
        f.write_str(&self.authority)?;
        if !self.query.is_empty() {
            let q = self
                .query
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("&");
            write!(f, "?{q}")?;
        }
        if let Some(frag) = &self.fragment {
            write!(f, "#{frag}")?;
        }
        Ok(())
    }
}

/// Free-function form of [`ResourceUrl::parse`].
pub fn parse_url(raw: &str, base: Option<&ResourceUrl>) -> Result<ResourceUrl, UrlError> {
    ResourceUrl::parse(raw, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scheme_relative_cvs_url() {
        let u = parse_url("cvs:?module=SCRAMToolBox/CXX/gcc3", None).unwrap();
        assert_eq!(u.scheme, "cvs");
        assert_eq!(u.authority, "");
        assert_eq!(
            u.query,
            vec![("module".into(), "SCRAMToolBox/CXX/gcc3".into())]
        );
    }

    #[test]
    fn file_url() {
        let u = parse_url("file:/tmp/x.doc", None).unwrap();
        assert_eq!(u.scheme, "file");
        assert_eq!(u.authority, "/tmp/x.doc");
        assert_eq!(u.file_path(), PathBuf::from("/tmp/x.doc"));
        assert_eq!(
            parse_url("file:///tmp/x.doc", None).unwrap().file_path(),
            PathBuf::from("/tmp/x.doc")
        );
    }

    #[test]
    fn wrapped_base_url_keeps_query_keys() {
        let raw =
            "cvs://cmscvs.cern.ch/.../SCRAMToolBox\n       ?auth=...&user=...&version=CMS_68_2";
        let u = parse_url(raw, None).unwrap();
        assert_eq!(u.scheme, "cvs");
        assert_eq!(u.authority, "cmscvs.cern.ch/.../SCRAMToolBox");
        for key in ["auth", "user", "version"] {
            assert!(u.get(key).is_some(), "{key}");
        }
        assert_eq!(u.version(), Some("CMS_68_2"));
        assert_eq!(u.raw(), raw);
    }

    #[test]
    fn scheme_relative_resolves_against_base() {
        let base = parse_url("cvs://host/repo?auth=a&version=V1", None).unwrap();
        let u = parse_url("cvs:?module=M", Some(&base)).unwrap();
        assert_eq!(u.authority, "host/repo");
        assert_eq!(u.get("module"), Some("M"));
        assert_eq!(u.version(), Some("V1"));
        assert_eq!(u.get("auth"), Some("a"));
        let pinned = parse_url("cvs:?module=M&version=V2", Some(&base)).unwrap();
        assert_eq!(pinned.version(), Some("V2"));
    }

    #[test]
    fn relative_path_resolves_against_base_directory() {
        let base = parse_url("file:/srv/docs/boot.doc", None).unwrap();
        assert_eq!(
            parse_url("tools/boost.doc", Some(&base)).unwrap().authority,
            "/srv/docs/tools/boost.doc"
        );
        assert_eq!(
            parse_url("/abs.doc", Some(&base)).unwrap().authority,
            "/abs.doc"
        );
    }

    #[test]
    fn missing_scheme_without_base() {
        assert!(matches!(
            parse_url("MyDocumentToInline", None),
            Err(UrlError::MissingScheme(_))
        ));
        assert!(matches!(parse_url("  ", None), Err(UrlError::Empty)));
    }

    #[test]
    fn cache_identity_ignores_order_identity_and_version() {
        let a = parse_url("cvs://h/r?module=M&auth=x&user=y&version=1", None).unwrap();
        let b = parse_url("cvs://h/r?version=2&user=z&module=M", None).unwrap();
        assert_eq!(a.cache_identity(), b.cache_identity());
        let c = parse_url("cvs://h/r?module=N", None).unwrap();
        assert_ne!(a.cache_identity(), c.cache_identity());
    }

    proptest! {
        #[test]
        fn display_reparses_to_same_url(
            scheme in "[a-z][a-z0-9+]{0,5}",
            slashes: bool,
            authority in "[a-zA-Z0-9_./-]{0,12}",
            query in prop::collection::vec(("[a-z]{1,5}", "[a-zA-Z0-9_./]{0,6}"), 0..4),
        ) {
            let mut raw = format!("{scheme}:{}{authority}", if slashes { "//" } else { "" });
            if !query.is_empty() {
                raw.push('?');
                raw.push_str(&query.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("&"));
            }
            let u = parse_url(&raw, None).unwrap();
            let again = parse_url(&u.to_string(), None).unwrap();
            prop_assert_eq!(&u.scheme, &again.scheme);
            prop_assert_eq!(&u.authority, &again.authority);
            prop_assert_eq!(&u.query, &again.query);
            prop_assert_eq!(u.cache_identity(), again.cache_identity());
        }
    }
}
