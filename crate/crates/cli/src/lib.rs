//! Command-line front end for `curvcrb`.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;

pub use commands::{execute, Output};
pub use config::{Cli, Command, RunConfig};
pub use error::CliError;

/// Resolves the configuration, runs the command, and writes its output to
/// `--out` or stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let output = execute(cli.command, &cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &output.body)?,
        None => std::io::stdout().lock().write_all(output.body.as_bytes())?,
    }
    output.failure.map_or(Ok(()), Err)
}
