use std::fmt;
use std::str::FromStr;

use super::{transition, EnvDelta, EnvMap, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shell {
    Sh,
    Csh,
}

impl FromStr for Shell {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim_start_matches('-') {
            "sh" | "bash" | "zsh" | "ksh" => Ok(Shell::Sh),
            "csh" | "tcsh" => Ok(Shell::Csh),
            _ => Err(RuntimeError::UnsupportedShell(s.to_owned())),
        }
    }
}

impl fmt::Display for Shell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shell::Sh => "sh",
            Shell::Csh => "csh",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Change {
    Set(String, String),
    Unset(String),
}

/// Every variable whose value differs between two maps, by name.
pub fn diff(before: &EnvMap, after: &EnvMap) -> Vec<Change> {
    let mut changes = Vec::new();
    for name in before.keys().filter(|k| !after.contains_key(*k)) {
        changes.push(Change::Unset(name.clone()));
    }
    for (name, value) in after {
        if before.get(name) != Some(value) {
            changes.push(Change::Set(name.clone(), value.clone()));
        }
    }
    changes.sort_by(|a, b| change_name(a).cmp(change_name(b)));
    changes
}

fn change_name(c: &Change) -> &str {
    match c {
        Change::Set(n, _) | Change::Unset(n) => n,
    }
}

fn sh_quote(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        if matches!(c, '\\' | '"' | '$' | '`') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn csh_quote(value: &str) -> String {
    let safe = |c: char| c.is_ascii_alphanumeric() || "_./:,+=@%-".contains(c);
    if !value.is_empty() && value.chars().all(safe) {
        return value.to_owned();
    }
    // single quotes protect everything in csh except `!` and `'` itself
    let mut out = String::from("'");
    for c in value.chars() {
        match c {
            '\'' => out.push_str("'\\''"),
            '!' => out.push_str("'\\!'"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

pub fn emit_changes(changes: &[Change], shell: Shell) -> String {
    let mut out = String::new();
    for change in changes {
        let line = match (shell, change) {
            (Shell::Sh, Change::Set(n, v)) => format!("{n}={}; export {n};", sh_quote(v)),
            (Shell::Sh, Change::Unset(n)) => format!("unset {n};"),
            (Shell::Csh, Change::Set(n, v)) => format!("setenv {n} {};", csh_quote(v)),
            (Shell::Csh, Change::Unset(n)) => format!("unsetenv {n};"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Shell text that takes `current` (the caller's environment) to the state
/// produced by [`transition`]. Nothing is written anywhere.
pub fn emit_shell(layers: &[&EnvDelta], current: &EnvMap, shell: Shell) -> String {
    emit_changes(&diff(current, &transition(current, layers)), shell)
}
