//! Command-line front end for the `sphereqp` solvers.

pub mod args;
pub mod bench;
pub mod commands;
pub mod deconv;
pub mod demo;
pub mod error;
pub mod problem;
pub mod solution;
pub mod trace;

use std::ffi::OsString;

use clap::Parser;

use crate::args::Cli;
use crate::commands::{EXIT_CONVERGED, EXIT_INPUT};

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code. Errors are reported on stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_CONVERGED };
        }
    };
    match commands::execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
