//! `reqc`: validate, plan, compile, trace, report and serve requirement documents.

pub mod commands;
pub mod config;
pub mod serve;
pub mod view;

use std::io::Write;
use std::process::ExitCode;

pub use commands::{Cli, Command};
pub use config::Config;

/// Exit statuses; every run maps to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    /// Validation errors, trace findings, or a server that could not start.
    Invalid = 1,
    /// Input missing or unparseable, or bad usage.
    Unreadable = 2,
    /// The compile driver stopped with an error.
    CompileFailed = 3,
    /// Compile finished but nodes are unfinished or tests fail.
    TestsFailing = 4,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

/// Parses `args` and runs the command, writing to the given streams.
pub fn run_with(args: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> Exit {
    use clap::{CommandFactory, FromArgMatches};
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Exit::Ok,
                _ => Exit::Unreadable,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return Exit::Unreadable;
        }
    };
    commands::dispatch(cli, &matches, out, err)
}
