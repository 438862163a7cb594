//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, bad config values),
//! 2 data/contract error (unreadable files, malformed formats, failed
//! checks).

mod cli;
mod commands;
mod config_file;

use clap::Parser;

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let parsed = cli::Cli::try_parse();
    let args = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::dispatch(args) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg);
            1
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {}", msg);
            2
        }
    }
}

/// Splits failures into the two non-zero exit classes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<micromil::Error> for CliError {
    fn from(e: micromil::Error) -> Self {
        match e {
            micromil::Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}
