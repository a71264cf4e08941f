//! Product specifications (`BuildSystem::ToolDoc`).
//!
//! One document describes every supported version of one product. Inside a
//! `<Tool>` block, `<Environment>` tags between `<Client>` and `</Client>`
//! declare variables the local site must supply; the others are derived
//! from those by `$NAME` substitution.

mod resolve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::{
    parse_with_handlers, DispatchError, GroupSwitch, HandlerMap, Location, TagEvent, Trigger,
};

pub use resolve::{
    dependency_order, resolve_tool, Binding, FsProber, LibProber, PromptFn, PromptRequest,
    Provenance, ResolveError, ResolvedTool, Resolver,
};

pub const TOOL_DOC_TYPE: &str = "BuildSystem::ToolDoc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarType {
    Plain,
    Lib,
    RuntimePath,
}

impl FromStr for VarType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("lib") {
            Ok(VarType::Lib)
        } else if s.eq_ignore_ascii_case("Runtime_path") {
            Ok(VarType::RuntimePath)
        } else if s.is_empty() || s.eq_ignore_ascii_case("plain") {
            Ok(VarType::Plain)
        } else {
            Err(format!("unknown variable type '{s}'"))
        }
    }
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarType::Plain => "plain",
            VarType::Lib => "lib",
            VarType::RuntimePath => "Runtime_path",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvVarDecl {
    pub name: String,
    /// Raw value, possibly with `$NAME` references. Always `None` for
    /// client variables.
    pub value: Option<String>,
    pub var_type: VarType,
    pub client: bool,
    /// Plain variables are build-time only unless exported explicitly with
    /// `runtime=yes`.
    pub exported: bool,
    /// Free text written inside the tag.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalRef {
    pub name: String,
    pub version: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ToolVersionBlock {
    pub version: String,
    pub info_url: Option<String>,
    pub libs: Vec<String>,
    pub client_vars: Vec<EnvVarDecl>,
    pub derived_vars: Vec<EnvVarDecl>,
    pub externals: Vec<ExternalRef>,
}

impl ToolVersionBlock {
    /// All variables in declaration order: client variables first, since
    /// they are bound before anything is derived.
    pub fn variables(&self) -> impl Iterator<Item = &EnvVarDecl> {
        self.client_vars.iter().chain(&self.derived_vars)
    }

    pub fn description(&self, var: &str) -> Option<&str> {
        self.variables()
            .find(|v| v.name == var)
            .map(|v| v.description.as_str())
            .filter(|d| !d.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    /// Lower-cased tool name, the key used everywhere else.
    pub name: String,
    /// Name as written in the document.
    pub display_name: String,
    pub blocks: Vec<ToolVersionBlock>,
}

#[derive(Debug, Error)]
pub enum ToolSpecError {
    #[error("{location}: {message}")]
    Document { location: Location, message: String },
    #[error("no <Tool> block in document")]
    Empty,
    #[error("tool {tool} has no version {version} (available: {})", available.join(", "))]
    UnknownVersion {
        tool: String,
        version: String,
        available: Vec<String>,
    },
}

impl ToolSpec {
    /// Exact match on the version string.
    pub fn select_version(&self, version: &str) -> Result<&ToolVersionBlock, ToolSpecError> {
        self.blocks
            .iter()
            .find(|b| b.version == version)
            .ok_or_else(|| ToolSpecError::UnknownVersion {
                tool: self.name.clone(),
                version: version.to_owned(),
                available: self.blocks.iter().map(|b| b.version.clone()).collect(),
            })
    }

    pub fn versions(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.version.as_str())
    }
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy)]
enum DescTarget {
    Client(usize),
    Derived(usize),
    External(usize),
}

#[derive(Default)]
struct Builder {
    display_name: Option<String>,
    blocks: Vec<ToolVersionBlock>,
    in_tool: bool,
    desc: Option<DescTarget>,
}

impl Builder {
    fn block(&mut self, tag: &str) -> Result<&mut ToolVersionBlock, String> {
        if !self.in_tool {
            return Err(format!("<{tag}> outside any <Tool> block"));
        }
        Ok(self.blocks.last_mut().expect("in_tool implies a block"))
    }

    fn add_var(&mut self, ev: &TagEvent, client: bool) -> Result<(), String> {
        let name = required(ev, "name")?.to_owned();
        let var_type: VarType = ev.attr("type").unwrap_or("").parse()?;
        let value = ev.attr("value").map(str::to_owned);
        let exported = ev
            .attr("runtime")
            .is_some_and(|v| matches!(v.to_ascii_lowercase().as_str(), "yes" | "true" | "1"));
        if client && value.is_some() {
            return Err(format!("client variable {name} cannot have a value"));
        }
        let block = self.block("Environment")?;
        if block.variables().any(|v| v.name == name) {
            return Err(format!(
                "duplicate variable {name} in {} block",
                block.version
            ));
        }
        let decl = EnvVarDecl {
            name,
            value,
            var_type,
            client,
            exported,
            description: String::new(),
        };
        let target = if client {
            block.client_vars.push(decl);
            DescTarget::Client(block.client_vars.len() - 1)
        } else {
            block.derived_vars.push(decl);
            DescTarget::Derived(block.derived_vars.len() - 1)
        };
        self.desc = Some(target);
        Ok(())
    }

    fn describe(&mut self, text: &str) {
        let Some(target) = self.desc else { return };
        let Some(block) = self.blocks.last_mut() else {
            return;
        };
        let slot = match target {
            DescTarget::Client(i) => &mut block.client_vars[i].description,
            DescTarget::Derived(i) => &mut block.derived_vars[i].description,
            DescTarget::External(i) => &mut block.externals[i].description,
        };
        let text = collapse_ws(text);
        if !text.is_empty() {
            if !slot.is_empty() {
                slot.push(' ');
            }
            slot.push_str(&text);
        }
    }
}

fn required<'e>(ev: &'e TagEvent, key: &str) -> Result<&'e str, String> {
    ev.attr(key)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| format!("<{}> requires a {key} attribute", ev.name().unwrap_or("?")))
}

type ToolHandlers = HandlerMap<Builder, String>;

fn handlers() -> ToolHandlers {
    let mut map: ToolHandlers = HandlerMap::new();
    let reg =
        |map: &mut ToolHandlers,
         group: &str,
         tag: &str,
         trigger: Trigger,
         f: fn(&mut Builder, &TagEvent, &mut GroupSwitch) -> Result<(), String>| {
            map.on(group, tag, trigger, f)
                .expect("tool handlers are distinct");
        };

    reg(&mut map, "tool", "Tool", Trigger::Open, |b, ev, sw| {
        let name = required(ev, "name")?;
        let version = required(ev, "version")?;
        match &b.display_name {
            Some(existing) if !existing.eq_ignore_ascii_case(name) => {
                return Err(format!("tool {name} in a document describing {existing}"))
            }
            Some(_) => {}
            None => b.display_name = Some(name.to_owned()),
        }
        if b.blocks.iter().any(|blk| blk.version == version) {
            return Err(format!("duplicate block for version {version}"));
        }
        b.blocks.push(ToolVersionBlock {
            version: version.to_owned(),
            ..Default::default()
        });
        b.in_tool = true;
        b.desc = None;
        sw.deactivate("client-env");
        sw.activate("derived-env");
        Ok(())
    });
    reg(&mut map, "tool", "Tool", Trigger::Close, |b, _, _| {
        b.in_tool = false;
        b.desc = None;
        Ok(())
    });
    reg(&mut map, "tool", "info", Trigger::Open, |b, ev, _| {
        let url = ev.attr("url").map(str::to_owned);
        b.block("info")?.info_url = url;
        Ok(())
    });
    reg(&mut map, "tool", "Lib", Trigger::Open, |b, ev, _| {
        let name = required(ev, "name")?.to_owned();
        b.block("Lib")?.libs.push(name);
        Ok(())
    });
    reg(&mut map, "tool", "Client", Trigger::Open, |b, _, sw| {
        b.block("Client")?;
        sw.deactivate("derived-env");
        sw.activate("client-env");
        Ok(())
    });
    reg(&mut map, "tool", "Client", Trigger::Close, |_, _, sw| {
        sw.deactivate("client-env");
        sw.activate("derived-env");
        Ok(())
    });
    reg(&mut map, "tool", "External", Trigger::Open, |b, ev, _| {
        let name = required(ev, "ref")?.to_owned();
        let version = required(ev, "version")?.to_owned();
        if b.display_name
            .as_deref()
            .is_some_and(|n| n.eq_ignore_ascii_case(&name))
        {
            return Err(format!("tool {name} lists itself as an external"));
        }
        let block = b.block("External")?;
        block.externals.push(ExternalRef {
            name: name.to_ascii_lowercase(),
            version,
            description: String::new(),
        });
        b.desc = Some(DescTarget::External(block.externals.len() - 1));
        Ok(())
    });
    reg(
        &mut map,
        "tool",
        "External",
        Trigger::CharData,
        |b, ev, _| {
            b.describe(ev.text().unwrap_or_default());
            Ok(())
        },
    );
    reg(
        &mut map,
        "tool",
        "Environment",
        Trigger::CharData,
        |b, ev, _| {
            b.describe(ev.text().unwrap_or_default());
            Ok(())
        },
    );
    reg(
        &mut map,
        "derived-env",
        "Environment",
        Trigger::Open,
        |b, ev, _| b.add_var(ev, false),
    );
    reg(
        &mut map,
        "client-env",
        "Environment",
        Trigger::Open,
        |b, ev, _| b.add_var(ev, true),
    );

    map.activate("tool").expect("group exists");
    map.activate("derived-env").expect("group exists");
    map
}

/// Builds a [`ToolSpec`] from a document body. A leading `<doc>` header, if
/// still present, is ignored.
pub fn parse_tool_doc(events: &[TagEvent]) -> Result<ToolSpec, ToolSpecError> {
    let mut builder = Builder::default();
    parse_with_handlers(events, &handlers(), &mut builder).map_err(|e| match e {
        DispatchError::Handler { location, error } => ToolSpecError::Document {
            location,
            message: error,
        },
        DispatchError::Group { location, error } => ToolSpecError::Document {
            location,
            message: error.to_string(),
        },
    })?;
    let display_name = builder.display_name.ok_or(ToolSpecError::Empty)?;
    Ok(ToolSpec {
        name: display_name.to_ascii_lowercase(),
        display_name,
        blocks: builder.blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{split_header, tokenize};

    const BOOST: &str = include_str!("../../tests/fixtures/corpus/boost.doc");

    fn parse(text: &str) -> Result<ToolSpec, ToolSpecError> {
        parse_tool_doc(&tokenize(text, "t").unwrap())
    }

    #[test]
    fn boost_fixture_blocks() {
        let (header, body) = split_header(tokenize(BOOST, "boost").unwrap()).unwrap();
        assert_eq!(header.doc_type, TOOL_DOC_TYPE);
        let spec = parse_tool_doc(&body).unwrap();
        assert_eq!(spec.name, "boost");
        assert_eq!(spec.display_name, "Boost");
        assert_eq!(
            spec.versions().collect::<Vec<_>>(),
            ["1.28.0", "1.29.0", "1.30.0"]
        );
        for block in &spec.blocks {
            assert_eq!(block.libs, ["boost_thread"]);
            assert_eq!(block.info_url.as_deref(), Some("http://www.boost.org"));
            let client: Vec<_> = block
                .client_vars
                .iter()
                .map(|v| (v.name.as_str(), v.var_type))
                .collect();
            assert_eq!(
                client,
                [
                    ("BOOST_BASE", VarType::Plain),
                    ("LIBDIR", VarType::Lib),
                    ("INCLUDE", VarType::Plain)
                ]
            );
            assert!(block
                .client_vars
                .iter()
                .all(|v| v.client && v.value.is_none()));
            assert_eq!(block.derived_vars.len(), 1);
            let ld = &block.derived_vars[0];
            assert_eq!(ld.name, "LD_LIBRARY_PATH");
            assert_eq!(ld.var_type, VarType::RuntimePath);
            assert_eq!(ld.value.as_deref(), Some("$LIBDIR"));
            assert!(!ld.client);
            assert_eq!(block.externals.len(), 1);
            assert_eq!(block.externals[0].name, "sockets");
            assert_eq!(block.externals[0].version, "1.0");
            assert_eq!(block.externals[0].description, "We need the sockets libs");
            assert_eq!(
                block.description("BOOST_BASE"),
                Some("The top of the Boost distribution.")
            );
            assert_eq!(block.description("LIBDIR"), None);
        }
    }

    #[test]
    fn minimal_tool() {
        let spec = parse("<Tool name=T version=1>").unwrap();
        assert_eq!(spec.blocks.len(), 1);
        let b = &spec.blocks[0];
        assert!(
            b.libs.is_empty()
                && b.client_vars.is_empty()
                && b.derived_vars.is_empty()
                && b.externals.is_empty()
        );
    }

    #[test]
    fn forward_reference_is_accepted_at_parse_time() {
        let spec = parse("<Tool name=T version=1><Environment name=A value=$UNDEF></Environment>")
            .unwrap();
        assert_eq!(
            spec.blocks[0].derived_vars[0].value.as_deref(),
            Some("$UNDEF")
        );
    }

    #[test]
    fn parse_errors() {
        let err = parse("<Environment name=X>").unwrap_err();
        assert!(
            err.to_string().contains("outside any <Tool> block"),
            "{err}"
        );
        let err = parse("<Tool name=T version=1></Tool><Environment name=X>").unwrap_err();
        assert!(
            err.to_string().contains("outside any <Tool> block"),
            "{err}"
        );
        let err = parse("<Tool name=T version=1><Environment name=X><Client><Environment name=X>")
            .unwrap_err();
        assert!(err.to_string().contains("duplicate variable X"), "{err}");
        let err = parse("<Tool name=T version=1><Client><Environment name=X value=1>").unwrap_err();
        assert!(err.to_string().contains("cannot have a value"), "{err}");
        let err = parse("<Tool name=T version=1><External ref=t version=1>").unwrap_err();
        assert!(err.to_string().contains("itself"), "{err}");
        let err = parse("<Tool name=T version=1><Environment name=X type=weird>").unwrap_err();
        assert!(err.to_string().contains("unknown variable type"), "{err}");
        let err = parse("<Tool name=T version=1><Tool name=U version=2>").unwrap_err();
        assert!(err.to_string().contains("describing T"), "{err}");
        assert!(matches!(parse("just text"), Err(ToolSpecError::Empty)));
    }

    #[test]
    fn client_scope_ends_at_close_tag() {
        let spec = parse(
            "<Tool name=T version=1><Client><Environment name=A></Environment></Client>\
             <Environment name=B value=$A></Environment>",
        )
        .unwrap();
        assert_eq!(spec.blocks[0].client_vars[0].name, "A");
        assert_eq!(spec.blocks[0].derived_vars[0].name, "B");
    }

    #[test]
    fn client_flags_follow_client_scope_in_boost_stream() {
        // hand-traced: per block, BOOST_BASE/LIBDIR/INCLUDE inside <Client>,
        // LD_LIBRARY_PATH after </Client>
        let spec = parse(BOOST).unwrap();
        let flags: Vec<(String, bool)> = spec
            .blocks
            .iter()
            .flat_map(|b| b.variables().map(|v| (v.name.clone(), v.client)))
            .collect();
        let expected_block = [
            ("BOOST_BASE", true),
            ("LIBDIR", true),
            ("INCLUDE", true),
            ("LD_LIBRARY_PATH", false),
        ];
        let expected: Vec<(String, bool)> = expected_block
            .iter()
            .cycle()
            .take(12)
            .map(|(n, c)| ((*n).to_owned(), *c))
            .collect();
        assert_eq!(flags, expected);
    }

    #[test]
    fn select_version_exact_and_order_independent() {
        let spec = parse(BOOST).unwrap();
        assert_eq!(spec.select_version("1.29.0").unwrap().version, "1.29.0");
        match spec.select_version("1.31.0") {
            Err(ToolSpecError::UnknownVersion { available, .. }) => {
                assert_eq!(available, ["1.28.0", "1.29.0", "1.30.0"])
            }
            other => panic!("{other:?}"),
        }
        assert!(spec.select_version("1.29").is_err());

        let mut reversed = spec.clone();
        reversed.blocks.reverse();
        assert_eq!(
            spec.select_version("1.29.0").unwrap(),
            reversed.select_version("1.29.0").unwrap()
        );
    }

    #[test]
    fn exported_plain_variable() {
        let spec =
            parse("<Tool name=T version=1><Environment name=A value=x runtime=yes>").unwrap();
        assert!(spec.blocks[0].derived_vars[0].exported);
    }
}
