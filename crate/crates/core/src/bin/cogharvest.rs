use std::process::ExitCode;

use clap::Parser;
use cogharvest::cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()) as u8)
}
