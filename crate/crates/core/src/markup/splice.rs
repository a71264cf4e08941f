//! Replacing `<inline url=...>` tags with the events of the referenced
//! document.

use std::error::Error;
use std::fmt;

use super::{Location, TagEvent};

/// A splice point handed to a resolver.
#[derive(Debug)]
pub struct SpliceRequest<'a> {
    /// Tag name as written (`inline`, `include`, ...).
    pub tag: &'a str,
    pub url: &'a str,
    pub event: &'a TagEvent,
}

#[derive(Debug)]
pub enum SpliceError<E> {
    MissingUrl { tag: String, location: Location },
    Resolve { chain: Vec<String>, error: E },
    Cycle { chain: Vec<String> },
}

impl<E: fmt::Display> fmt::Display for SpliceError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpliceError::MissingUrl { tag, location } => {
                write!(f, "{location}: <{tag}> without a url attribute")
            }
            SpliceError::Resolve { chain, error } => write!(f, "{}: {error}", chain.join(" -> ")),
            SpliceError::Cycle { chain } => write!(f, "inline cycle: {}", chain.join(" -> ")),
        }
    }
}

impl<E: Error + 'static> Error for SpliceError<E> {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            SpliceError::Resolve { error, .. } => Some(error),
            _ => None,
        }
    }
}

/// Single-level splice: every open tag named in `tags` is replaced by the
/// resolver's output, and matching close tags are dropped. The resolver's
/// output is inserted as is, so any recursion is the resolver's business.
pub fn splice_with<E, F>(
    events: Vec<TagEvent>,
    tags: &[&str],
    mut resolve: F,
) -> Result<Vec<TagEvent>, SpliceError<E>>
where
    F: FnMut(&SpliceRequest<'_>) -> Result<Vec<TagEvent>, E>,
{
    let is_splice_tag =
        |name: Option<&str>| name.is_some_and(|n| tags.iter().any(|t| t.eq_ignore_ascii_case(n)));
    let mut out = Vec::with_capacity(events.len());
    for event in events {
        if !is_splice_tag(event.name()) {
            out.push(event);
            continue;
        }
        let name = event.name().unwrap_or_default().to_owned();
        if event.is_close(&name) {
            continue;
        }
        let Some(url) = event.attr("url") else {
            return Err(SpliceError::MissingUrl {
                tag: name,
                location: event.location.clone(),
            });
        };
        let spliced = resolve(&SpliceRequest {
            tag: &name,
            url,
            event: &event,
        })
        .map_err(|error| SpliceError::Resolve {
            chain: vec![url.to_owned()],
            error,
        })?;
        out.extend(spliced);
    }
    Ok(out)
}

/// Recursively expands `<inline url=...>` tags. `resolve` maps a URL to the
/// events of that document; a leading `<doc>` header of an inlined document
/// is dropped. A document that (transitively) inlines itself is reported as
/// a cycle with the URL chain.
pub fn splice_inline<E, F>(
    events: Vec<TagEvent>,
    mut resolve: F,
) -> Result<Vec<TagEvent>, SpliceError<E>>
where
    F: FnMut(&str) -> Result<Vec<TagEvent>, E>,
{
    let mut chain = Vec::new();
    expand(events, &mut resolve, &mut chain)
}

fn expand<E, F>(
    events: Vec<TagEvent>,
    resolve: &mut F,
    chain: &mut Vec<String>,
) -> Result<Vec<TagEvent>, SpliceError<E>>
where
    F: FnMut(&str) -> Result<Vec<TagEvent>, E>,
{
    let mut out = Vec::with_capacity(events.len());
    for event in events {
        if event.is_close("inline") {
            continue;
        }
        if !event.is_open("inline") {
            out.push(event);
            continue;
        }
        let Some(url) = event.attr("url") else {
            return Err(SpliceError::MissingUrl {
                tag: event.name().unwrap_or("inline").to_owned(),
                location: event.location.clone(),
            });
        };
        let url = url.to_owned();
        chain.push(url.clone());
        if chain[..chain.len() - 1].contains(&url) {
            return Err(SpliceError::Cycle {
                chain: chain.clone(),
            });
        }
        let mut child = resolve(&url).map_err(|error| SpliceError::Resolve {
            chain: chain.clone(),
            error,
        })?;
        if let Some(idx) = child.iter().position(|e| !e.is_blank_text()) {
            if child[idx].is_open("doc") {
                child.remove(idx);
            }
        }
        out.extend(expand(child, resolve, chain)?);
        chain.pop();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::markup::{serialize, tokenize, EventKind};

    fn docs(entries: &[(&str, &str)]) -> HashMap<String, String> {
        entries
            .iter()
            .map(|(k, v)| ((*k).to_owned(), (*v).to_owned()))
            .collect()
    }

    fn strip(events: &[TagEvent]) -> Vec<EventKind> {
        events.iter().map(|e| e.kind.clone()).collect()
    }

    fn run(
        root: &str,
        store: &HashMap<String, String>,
    ) -> Result<Vec<TagEvent>, SpliceError<String>> {
        splice_inline(tokenize(root, "root").unwrap(), |url| {
            let text = store
                .get(url)
                .ok_or_else(|| format!("no such document {url}"))?;
            tokenize(text, url).map_err(|e| e.to_string())
        })
    }

    #[test]
    fn single_splice() {
        let store = docs(&[("file:U", "<x>")]);
        let out = run(r#"<a><inline url="file:U"><b>"#, &store).unwrap();
        assert_eq!(strip(&out), strip(&tokenize("<a><x><b>", "t").unwrap()));
    }

    #[test]
    fn inlined_header_is_dropped() {
        let store = docs(&[("u", "<doc type=t version=1><y>")]);
        let out = run("<inline url=u>", &store).unwrap();
        assert_eq!(serialize(&out), "<y>");
    }

    #[test]
    fn two_level_nesting_flattens() {
        // hand-computed: A = "1<inline B>2", B = "3<inline C>4", C = "5"
        let store = docs(&[("B", "<b3><inline url=C><b4>"), ("C", "<c5>")]);
        let out = run("<a1><inline url=B><a2>", &store).unwrap();
        assert_eq!(serialize(&out), "<a1><b3><c5><b4><a2>");
    }

    #[test]
    fn self_inclusion_is_a_cycle() {
        let store = docs(&[("file:D", "<p><inline url=file:D>")]);
        match run("<inline url=file:D>", &store) {
            Err(SpliceError::Cycle { chain }) => assert_eq!(chain, vec!["file:D", "file:D"]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn resolver_failure_reports_chain() {
        let store = docs(&[("A", "<inline url=missing>")]);
        let err = run("<inline url=A>", &store).unwrap_err();
        assert_eq!(err.to_string(), "A -> missing: no such document missing");
    }

    #[test]
    fn inline_without_url() {
        let err = run("<inline>", &HashMap::new()).unwrap_err();
        assert!(matches!(err, SpliceError::MissingUrl { .. }));
    }

    #[test]
    fn close_inline_tags_are_dropped() {
        let store = docs(&[("u", "<z>")]);
        let out = run("<inline url=u></inline>.", &store).unwrap();
        assert_eq!(serialize(&out), "<z>.");
    }
}
