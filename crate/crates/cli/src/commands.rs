use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use scram_core::project::{
    area_context, list_installs, parse_location, ProjectArea, Session, Settings,
};
use scram_core::runtime::{emit_shell, EnvDelta, EnvMap, Shell};
use scram_core::toolspec::PromptRequest;

use crate::{Cli, Command, ToolCommand};

/// Asks on the terminal for values the site file does not give. Without a
/// terminal nothing is asked and resolution fails with its hint.
fn terminal_prompt(req: &PromptRequest) -> Option<String> {
    let mut err = std::io::stderr();
    let _ = writeln!(
        err,
        "{} {} needs a value for {}",
        req.tool, req.version, req.var
    );
    if !req.description.is_empty() {
        let _ = writeln!(err, "  {}", req.description);
    }
    let _ = write!(err, "{}: ", req.var);
    let _ = err.flush();
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line).ok()?;
    let value = line.trim();
    (!value.is_empty()).then(|| value.to_owned())
}

fn interactive() -> bool {
    std::io::stdin().is_terminal() && std::io::stderr().is_terminal()
}

fn here() -> Result<PathBuf> {
    std::env::current_dir().context("cannot determine the current directory")
}

fn area(cwd: &Path) -> Result<ProjectArea> {
    Ok(area_context(cwd)?)
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8> {
    let cwd = here()?;
    let env: EnvMap = std::env::vars().collect();
    let settings =
        Settings::from_env(&env, &cwd, cli.arch.as_deref(), cli.refresh).context("settings")?;
    let session = Session::new(settings).context("site file")?;
    let mut prompt = terminal_prompt;
    let mut out = std::io::stdout().lock();

    match cli.command {
        Command::List { project } => {
            let registry = session.registry().context("list")?;
            let arch = session.settings().arch.canonical();
            write!(
                out,
                "{}",
                list_installs(registry.records(), project.as_deref(), &arch)
            )?;
        }
        Command::Project { name, version } => {
            let area = session
                .create_dev_area(&name, &version, &cwd)
                .context("project")?;
            writeln!(out, "Created developer area {}", area.root().display())?;
        }
        Command::Bootstrap { url, dest } => {
            let url = parse_location(&url, &cwd).context("bootstrap")?;
            let dest =
                dest.map_or_else(|| session.settings().install_root.clone(), |d| cwd.join(d));
            let prompt = interactive().then_some(&mut prompt as &mut _);
            let done = session
                .bootstrap_install(&url, &dest, prompt)
                .context("bootstrap")?;
            writeln!(
                out,
                "Bootstrapped {} {} in {} ({} tools); build it, then run scram install",
                done.doc.name,
                done.doc.version,
                done.area.root().display(),
                done.tools.len()
            )?;
        }
        Command::Install { force } => {
            let area = area(&cwd).context("install")?;
            let (record, changed) = session.register_install(&area, force).context("install")?;
            if changed {
                writeln!(
                    out,
                    "Installed {} {} at {}",
                    record.project,
                    record.version,
                    record.location.display()
                )?;
            } else {
                writeln!(
                    out,
                    "{} {} is already installed",
                    record.project, record.version
                )?;
            }
        }
        Command::Build { args } => {
            let area = area(&cwd).context("build")?;
            let status = session.build(&area, &args, &env).context("build")?;
            if !status.success() {
                return Ok(status
                    .code()
                    .map_or(1, |c| u8::try_from(c).unwrap_or(1).max(1)));
            }
        }
        Command::Setup { name, version, url } => {
            let area = area(&cwd).context("setup")?;
            let url = url
                .map(|u| parse_location(&u, &cwd))
                .transpose()
                .context("setup")?;
            if url.is_some() && version.is_none() {
                bail!("setup: a URL needs a tool name and version before it");
            }
            let prompt = interactive().then_some(&mut prompt as &mut _);
            let written = session
                .setup_tool(
                    &area,
                    name.as_deref(),
                    version.as_deref(),
                    url.as_ref(),
                    prompt,
                )
                .context("setup")?;
            for tool in &written {
                writeln!(out, "Set up {} {}", tool.name, tool.version)?;
            }
            if written.is_empty() {
                writeln!(out, "All tools up to date")?;
            }
        }
        Command::Tool(ToolCommand::List) => {
            let area = area(&cwd).context("tool list")?;
            write!(out, "{}", session.tool_list(&area).context("tool list")?)?;
        }
        Command::Tool(ToolCommand::Info { name }) => {
            let area = area(&cwd).context("tool info")?;
            write!(
                out,
                "{}",
                session.tool_info(&area, &name).context("tool info")?
            )?;
        }
        Command::Runtime(args) => {
            let shell = if args.csh { Shell::Csh } else { Shell::Sh };
            let area = area(&cwd).context("runtime")?;
            let layers = session
                .runtime_layers(&area, args.app.as_deref())
                .context("runtime")?;
            let refs: Vec<&EnvDelta> = layers.iter().collect();
            write!(out, "{}", emit_shell(&refs, &env, shell))?;
        }
    }
    out.flush()?;
    Ok(0)
}
