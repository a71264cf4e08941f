//! `scram`: configuration management for multi-project development.

mod commands;

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "scram",
    version,
    about = "Configuration management for multi-project software development"
)]
pub struct Cli {
    /// Architecture to act for, e.g. Linux__2.4 (default: SCRAM_ARCH, then the running system)
    #[arg(long, global = true, value_name = "ARCH")]
    pub arch: Option<String>,
    /// Refetch unversioned documents once in this run
    #[arg(long, global = true)]
    pub refresh: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List registered installations, optionally of one project
    List { project: Option<String> },
    /// Create a developer area for an installed project in the current directory
    Project { name: String, version: String },
    /// Create a central installation from a bootstrap file
    Bootstrap {
        /// URL or path of the bootstrap file
        url: String,
        /// Directory to create the area in (default: the install root)
        dest: Option<String>,
    },
    /// Register the current central area so developers can use it
    Install {
        /// Register even if no build has succeeded
        #[arg(long)]
        force: bool,
    },
    /// Run the site's build command in the area's tmp directory
    Build {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    /// Resolve tools into the current area
    Setup {
        name: Option<String>,
        version: Option<String>,
        /// Specification URL; needs NAME and VERSION
        url: Option<String>,
    },
    /// Query the tools of the current area
    #[command(subcommand)]
    Tool(ToolCommand),
    /// Print shell commands that set up the area's runtime environment
    Runtime(RuntimeArgs),
}

#[derive(Debug, Subcommand)]
pub enum ToolCommand {
    /// One line per tool: active version and configured default
    List,
    /// Everything known about one tool
    Info { name: String },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("dialect").required(true).multiple(false))]
pub struct RuntimeArgs {
    /// Emit csh syntax (also spelled -csh)
    #[arg(long, group = "dialect")]
    pub csh: bool,
    /// Emit Bourne shell syntax (also spelled -sh)
    #[arg(long, group = "dialect")]
    pub sh: bool,
    /// Overlay the application environment config/app-env/NAME
    #[arg(long, value_name = "NAME")]
    pub app: Option<String>,
}

/// `-csh` and `-sh` are accepted as written in the classic documentation.
fn normalize_args(args: impl IntoIterator<Item = OsString>) -> Vec<OsString> {
    args.into_iter()
        .map(|a| match a.to_str() {
            Some("-csh") => OsString::from("--csh"),
            Some("-sh") => OsString::from("--sh"),
            _ => a,
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(normalize_args(std::env::args_os())) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("scram: {message}");
            ExitCode::from(1)
        }
    }
}
