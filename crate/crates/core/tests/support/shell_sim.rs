//! A tiny interpreter for the statements the runtime emitter produces,
//! written from the shells' quoting rules rather than from the emitter.
//! Anything outside the subset (expansions, history references, unknown
//! commands) is an error, so a sloppy emission cannot slip through.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;

pub type Env = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    Sh,
    Csh,
}

fn valid_name(n: &str) -> bool {
    let mut c = n.chars();
    c.next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && c.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits one statement list into words, ending a statement at an unquoted
/// `;` or newline.
fn lex(text: &str, dialect: Dialect) -> Result<Vec<Vec<String>>, String> {
    let mut statements = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut word: Option<String> = None;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ';' | '\n' => {
                words.extend(word.take());
                if !words.is_empty() {
                    statements.push(std::mem::take(&mut words));
                }
            }
            ' ' | '\t' => words.extend(word.take()),
            '\'' => {
                let w = word.get_or_insert_with(String::new);
                loop {
                    match chars.next() {
                        None => return Err("unterminated single quote".into()),
                        Some('\'') => break,
                        Some('!') if dialect == Dialect::Csh => {
                            return Err("history expansion inside quotes".into())
                        }
                        Some('\n') if dialect == Dialect::Csh => {
                            return Err("newline inside csh quotes".into())
                        }
                        Some(c) => w.push(c),
                    }
                }
            }
            '"' if dialect == Dialect::Sh => {
                let w = word.get_or_insert_with(String::new);
                loop {
                    match chars.next() {
                        None => return Err("unterminated double quote".into()),
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(e @ ('\\' | '"' | '$' | '`')) => w.push(e),
                            Some('\n') => {}
                            Some(e) => {
                                w.push('\\');
                                w.push(e);
                            }
                            None => return Err("dangling backslash".into()),
                        },
                        Some('$' | '`') => return Err("expansion inside double quotes".into()),
                        Some(c) => w.push(c),
                    }
                }
            }
            '\\' => match chars.next() {
                Some(e) => word.get_or_insert_with(String::new).push(e),
                None => return Err("dangling backslash".into()),
            },
            '$' | '`' | '"' | '!' | '|' | '&' | '<' | '>' | '(' | ')' | '*' | '?' | '[' | '{'
            | '}' | '~' | '#' => return Err(format!("unquoted special character {c:?}")),
            c => word.get_or_insert_with(String::new).push(c),
        }
    }
    words.extend(word.take());
    if !words.is_empty() {
        statements.push(words);
    }
    Ok(statements)
}

/// Evaluates `script` starting from the exported environment `env`.
pub fn eval(script: &str, env: &Env, dialect: Dialect) -> Result<Env, String> {
    let mut vars = env.clone();
    let mut exported: BTreeSet<String> = env.keys().cloned().collect();
    for words in lex(script, dialect)? {
        let cmd = words[0].as_str();
        match (dialect, cmd, words.len()) {
            (Dialect::Sh, "export", 2) | (Dialect::Sh, "unset", 2) if !valid_name(&words[1]) => {
                return Err(format!("bad name {}", words[1]))
            }
            (Dialect::Sh, "export", 2) => {
                exported.insert(words[1].clone());
            }
            (Dialect::Sh, "unset", 2) => {
                vars.remove(&words[1]);
                exported.remove(&words[1]);
            }
            (Dialect::Sh, w, 1) if w.contains('=') => {
                let (name, value) = w.split_once('=').unwrap();
                if !valid_name(name) {
                    return Err(format!("bad assignment {w}"));
                }
                vars.insert(name.to_owned(), value.to_owned());
            }
            (Dialect::Csh, "setenv", 3) if valid_name(&words[1]) => {
                vars.insert(words[1].clone(), words[2].clone());
                exported.insert(words[1].clone());
            }
            (Dialect::Csh, "unsetenv", 2) if valid_name(&words[1]) => {
                vars.remove(&words[1]);
                exported.remove(&words[1]);
            }
            _ => return Err(format!("unsupported statement {words:?}")),
        }
    }
    Ok(vars
        .into_iter()
        .filter(|(k, _)| exported.contains(k))
        .collect())
}

/// Runs `script` in a real `sh` started with exactly `env` and returns the
/// resulting environment, minus the variables the shell adds itself.
/// `None` when no `sh` is available.
pub fn eval_real_sh(script: &str, env: &Env) -> Option<Env> {
    let sh = ["/bin/sh", "/usr/bin/sh"]
        .into_iter()
        .find(|p| Path::new(p).exists())?;
    let dir = tempfile::tempdir().ok()?;
    let file = dir.path().join("script.sh");
    std::fs::write(&file, script).ok()?;
    let out = Command::new(sh)
        .arg("-c")
        .arg(format!(". '{}' && exec /usr/bin/env -0", file.display()))
        .env_clear()
        .envs(env)
        .output()
        .ok()?;
    assert!(
        out.status.success(),
        "sh failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).expect("utf-8 environment");
    Some(
        text.split('\0')
            .filter_map(|kv| kv.split_once('='))
            .filter(|(k, _)| !matches!(*k, "PWD" | "OLDPWD" | "SHLVL" | "_"))
            .map(|(k, v)| (k.to_owned(), v.to_owned()))
            .collect(),
    )
}
