//! Command-line surface for the artifact-reduction toolkit.
//!
//! Exit codes: 0 on success, 2 on usage errors (clap), 1 on runtime
//! failures. Diagnostics go to stderr; stdout carries data and CSV only.

mod commands;

use clap::Parser;
use commands::Cli;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match commands::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
