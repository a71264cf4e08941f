//! Configuration management for multi-project software development.
//!
//! Product specifications, configurations and project requirements are
//! written in a loose tag dialect ([`markup`]), fetched through pluggable URL
//! schemes with a persistent cache ([`url`]) and turned into typed documents
//! ([`activedoc`]). Tool versions are pinned centrally in a configuration and
//! selected by name per project and architecture ([`config`]), bound to the
//! local system ([`toolspec`]), installed into central and developer areas
//! ([`project`]) and finally exported as shell environments with rollback
//! ([`runtime`]).

pub mod activedoc;
pub mod config;
pub mod markup;
pub mod project;
pub mod runtime;
pub mod site;
pub mod toolspec;
pub mod url;
pub mod version;
