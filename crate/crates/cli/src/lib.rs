//! Command-line front end: container I/O, manifests and the subcommands.

pub mod commands;
pub mod config;
pub mod container;
pub mod manifest;

use std::ffi::OsString;

use clap::Parser;
use lrccs::Error;

/// Exit code for usage errors and invalid parameters.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for unreadable or inconsistent input data.
pub const EXIT_DATA: u8 = 3;
/// Exit code for solver failures.
pub const EXIT_SOLVER: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_)
        | Error::ReductionTooHigh { .. }
        | Error::OperatorTooLarge(_) => EXIT_USAGE,
        e if e.is_solver_failure() => EXIT_SOLVER,
        _ => EXIT_DATA,
    }
}

fn init_threads(threads: Option<usize>) -> Result<(), Error> {
    match threads {
        Some(0) => Err(Error::InvalidParameter(
            "--threads must be at least 1".into(),
        )),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("cannot start thread pool: {e}"))),
        None => Ok(()),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run_from_args(args: Vec<OsString>) -> u8 {
    let fail = |e: &Error| {
        eprintln!("error: {}: {e}", e.name());
        exit_code(e)
    };
    let args = match config::expand_config(args) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    if let Err(e) = init_threads(cli.threads) {
        return fail(&e);
    }
    match commands::run(cli) {
        Ok(()) => 0,
        Err(e) => fail(&e),
    }
}
