//! Event tokenizer for the scram document dialect.
//!
//! Documents look like XML but are not well-formed: tags such as
//! `<select name=CC>` are never closed, attribute values may be unquoted and
//! nothing enforces nesting. The tokenizer therefore produces a flat stream
//! of [`TagEvent`]s and leaves any notion of scope to the handlers that
//! consume it (see [`HandlerMap`]).

mod dispatch;
mod splice;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::version::DottedVersion;

pub use dispatch::{
    parse_with_handlers, DispatchError, GroupSwitch, HandlerError, HandlerMap, Trigger,
};
pub use splice::{splice_inline, splice_with, SpliceError, SpliceRequest};

/// Position of an event in its source document. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Location {
    pub source: Arc<str>,
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.source, self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Open { name: String, attrs: Vec<Attribute> },
    Close { name: String },
    CharData { text: String },
}

/// One parse event. Tag names keep their original spelling; all lookups on
/// names and attribute keys ignore ASCII case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagEvent {
    pub kind: EventKind,
    pub location: Location,
}

impl TagEvent {
    pub fn name(&self) -> Option<&str> {
        match &self.kind {
            EventKind::Open { name, .. } | EventKind::Close { name } => Some(name),
            EventKind::CharData { .. } => None,
        }
    }

    pub fn is_open(&self, tag: &str) -> bool {
        matches!(&self.kind, EventKind::Open { name, .. } if name.eq_ignore_ascii_case(tag))
    }

    pub fn is_close(&self, tag: &str) -> bool {
        matches!(&self.kind, EventKind::Close { name } if name.eq_ignore_ascii_case(tag))
    }

    pub fn attrs(&self) -> &[Attribute] {
        match &self.kind {
            EventKind::Open { attrs, .. } => attrs,
            _ => &[],
        }
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs()
            .iter()
            .find(|a| a.key.eq_ignore_ascii_case(key))
            .map(|a| a.value.as_str())
    }

    pub fn text(&self) -> Option<&str> {
        match &self.kind {
            EventKind::CharData { text } => Some(text),
            _ => None,
        }
    }

    pub fn is_blank_text(&self) -> bool {
        self.text().is_some_and(|t| t.trim().is_empty())
    }
}

/// Serializes an event back into the dialect. Tokenizing the output yields
/// the same event kinds, names, attributes and text.
impl fmt::Display for TagEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::Open { name, attrs } => {
                write!(f, "<{name}")?;
                for Attribute { key, value } in attrs {
                    // A value holding `"` can only have come from an unquoted
                    // run, so it has no whitespace and can be written bare.
                    if value.contains('"') {
                        write!(f, " {key}={value}")?;
                    } else {
                        write!(f, " {key}=\"{value}\"")?;
                    }
                }
                f.write_str(">")
            }
            EventKind::Close { name } => write!(f, "</{name}>"),
            EventKind::CharData { text } => f.write_str(text),
        }
    }
}

pub fn serialize(events: &[TagEvent]) -> String {
    events.iter().map(ToString::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkupError {
    #[error("{location}: unterminated tag <{name}")]
    UnterminatedTag { name: String, location: Location },
    #[error("{location}: unterminated quoted value for attribute '{key}'")]
    UnterminatedQuote { key: String, location: Location },
    #[error("{location}: unexpected character {found:?} in tag <{name}>")]
    UnexpectedChar {
        name: String,
        found: char,
        location: Location,
    },
    #[error(
        "{location}: single-quoted value for attribute '{key}' (only double quotes are allowed)"
    )]
    SingleQuote { key: String, location: Location },
    #[error("{location}: duplicate attribute '{key}' in <{name}>")]
    DuplicateAttribute {
        name: String,
        key: String,
        location: Location,
    },
    #[error("{source_id}: document has no <doc> header")]
    MissingHeader { source_id: String },
    #[error("{location}: <doc> header has no '{attr}' attribute")]
    MissingHeaderAttr {
        attr: &'static str,
        location: Location,
    },
    #[error("{location}: invalid document type or version '{value}'")]
    InvalidHeader { value: String, location: Location },
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    column: u32,
    source: Arc<str>,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_second(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn location(&self) -> Location {
        Location {
            source: self.source.clone(),
            line: self.line,
            column: self.column,
        }
    }

    fn at_tag_start(&self) -> bool {
        if self.peek() != Some('<') {
            return false;
        }
        match self.peek_second() {
            Some(c) if c.is_ascii_alphabetic() => true,
            Some('/') => self.src[self.pos + 2..]
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic()),
            _ => false,
        }
    }

    fn skip_whitespace(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.bump();
        }
        &self.src[start..self.pos]
    }
}

/// Splits `text` into tag events. `source_id` is recorded in every event's
/// location and in error messages.
pub fn tokenize(text: &str, source_id: &str) -> Result<Vec<TagEvent>, MarkupError> {
    let mut cur = Cursor {
        src: text,
        pos: 0,
        line: 1,
        column: 1,
        source: Arc::from(source_id),
    };
    let mut events = Vec::new();

    while cur.peek().is_some() {
        if cur.at_tag_start() {
            events.push(read_tag(&mut cur)?);
            continue;
        }
        let location = cur.location();
        let start = cur.pos;
        // '<' that does not start a tag is ordinary text
        cur.bump();
        while cur.peek().is_some() && !cur.at_tag_start() {
            cur.bump();
        }
        events.push(TagEvent {
            kind: EventKind::CharData {
                text: text[start..cur.pos].to_owned(),
            },
            location,
        });
    }
    Ok(events)
}

fn read_tag(cur: &mut Cursor<'_>) -> Result<TagEvent, MarkupError> {
    let location = cur.location();
    cur.bump(); // '<'
    let closing = cur.peek() == Some('/');
    if closing {
        cur.bump();
    }
    let name = cur.take_while(is_name_char).to_owned();
    let unterminated = |name: &str| MarkupError::UnterminatedTag {
        name: name.to_owned(),
        location: location.clone(),
    };

    if closing {
        cur.skip_whitespace();
        return match cur.bump() {
            Some('>') => Ok(TagEvent {
                kind: EventKind::Close { name },
                location,
            }),
            None => Err(unterminated(&name)),
            Some(found) => Err(MarkupError::UnexpectedChar {
                name,
                found,
                location: cur.location(),
            }),
        };
    }

    let mut attrs: Vec<Attribute> = Vec::new();
    loop {
        cur.skip_whitespace();
        match cur.peek() {
            None => return Err(unterminated(&name)),
            Some('>') => {
                cur.bump();
                break;
            }
            Some(c) if is_name_char(c) => {}
            Some(found) => {
                return Err(MarkupError::UnexpectedChar {
                    name,
                    found,
                    location: cur.location(),
                })
            }
        }
        let key_location = cur.location();
        let key = cur.take_while(is_name_char).to_owned();
        cur.skip_whitespace();
        let value = if cur.peek() == Some('=') {
            cur.bump();
            cur.skip_whitespace();
            match cur.peek() {
                Some('"') => {
                    let quote_location = cur.location();
                    cur.bump();
                    let value = cur.take_while(|c| c != '"').to_owned();
                    if cur.bump().is_none() {
                        return Err(MarkupError::UnterminatedQuote {
                            key,
                            location: quote_location,
                        });
                    }
                    value
                }
                Some('\'') => {
                    return Err(MarkupError::SingleQuote {
                        key,
                        location: cur.location(),
                    })
                }
                _ => cur
                    .take_while(|c| !c.is_whitespace() && c != '>')
                    .to_owned(),
            }
        } else {
            String::new()
        };
        if attrs.iter().any(|a| a.key.eq_ignore_ascii_case(&key)) {
            return Err(MarkupError::DuplicateAttribute {
                name,
                key,
                location: key_location,
            });
        }
        attrs.push(Attribute { key, value });
    }

    Ok(TagEvent {
        kind: EventKind::Open { name, attrs },
        location,
    })
}

/// Type and version declared by a document's leading `<doc>` tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocHeader {
    pub doc_type: String,
    pub doc_version: DottedVersion,
}

impl fmt::Display for DocHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.doc_type, self.doc_version)
    }
}

fn header_index(events: &[TagEvent]) -> Option<usize> {
    let idx = events.iter().position(|e| !e.is_blank_text())?;
    events[idx].is_open("doc").then_some(idx)
}

/// Reads the header from the first `<doc>` tag. Only whitespace may come
/// before it.
pub fn read_doc_header(events: &[TagEvent]) -> Result<DocHeader, MarkupError> {
    let Some(idx) = header_index(events) else {
        let source_id = events
            .first()
            .map(|e| e.location.source.to_string())
            .unwrap_or_default();
        return Err(MarkupError::MissingHeader { source_id });
    };
    let doc = &events[idx];
    let location = doc.location.clone();
    let doc_type = doc.attr("type").ok_or(MarkupError::MissingHeaderAttr {
        attr: "type",
        location: location.clone(),
    })?;
    let version = doc.attr("version").ok_or(MarkupError::MissingHeaderAttr {
        attr: "version",
        location: location.clone(),
    })?;
    if doc_type.is_empty() {
        return Err(MarkupError::InvalidHeader {
            value: doc_type.to_owned(),
            location,
        });
    }
    let doc_version = version.parse().map_err(|_| MarkupError::InvalidHeader {
        value: version.to_owned(),
        location,
    })?;
    Ok(DocHeader {
        doc_type: doc_type.to_owned(),
        doc_version,
    })
}

/// Reads the header and returns the remaining body with the `<doc>` event
/// removed.
pub fn split_header(mut events: Vec<TagEvent>) -> Result<(DocHeader, Vec<TagEvent>), MarkupError> {
    let header = read_doc_header(&events)?;
    if let Some(idx) = header_index(&events) {
        events.remove(idx);
    }
    Ok((header, events))
}
