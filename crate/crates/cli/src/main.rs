//! `qode`: command-line front end for the resource estimator.
//!
//! Exit codes: 0 success, 1 failed verification checks, 2 invalid input,
//! 3 numerical failure. Verbosity follows the `QODE_LOG` variable.

mod commands;
mod config;
mod error;
mod generators;
mod output;
mod system_file;

use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QODE_LOG", "warn")).init();
    match commands::run(commands::Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
