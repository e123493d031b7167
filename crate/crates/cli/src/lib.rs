//! Batch front end: parses spec files and flags, runs the solvers and
//! checks of `excon`, and writes one run directory per invocation with a
//! manifest of every artifact.
//!
//! Exit codes: 0 when every verdict passes, 1 on any fail verdict, 2 on
//! usage, input or I/O errors.

mod args;
mod commands;
mod output;

use std::ffi::OsString;

use clap::Parser;

pub use args::{Cli, Command};
pub use commands::{CliError, Outcome};
pub use output::{resolve_out, sha256_hex, write_atomic, RunDir, CONFIG, MANIFEST, OUT_ROOT_ENV};

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::execute(&cli.command) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
