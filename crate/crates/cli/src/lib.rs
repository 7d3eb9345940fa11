//! The `gnetdet` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 data or format error,
//! 4 internal error.

mod args;
mod commands;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::Parser;
use gnetdet_core::Error as CoreError;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::new(EXIT_USAGE, anyhow::anyhow!("{msg}"))
    }

    pub fn invalid(msg: impl fmt::Display) -> Self {
        CliError::new(EXIT_INVALID, anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        CliError::new(EXIT_DATA, anyhow::anyhow!("{msg}"))
    }
}

pub fn exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::InvalidArgument(_) | CoreError::Unsupported(_) => EXIT_USAGE,
        CoreError::InvalidSpec(_) | CoreError::Capacity { .. } => EXIT_INVALID,
        CoreError::Shape(_)
        | CoreError::FingerprintMismatch { .. }
        | CoreError::Format { .. }
        | CoreError::UnknownImage(_)
        | CoreError::Io { .. } => EXIT_DATA,
        CoreError::Nondeterministic(_) => EXIT_INTERNAL,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::new(exit_code(&e), e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(EXIT_DATA, e)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match commands::dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.error);
            e.code
        }
    }
}
