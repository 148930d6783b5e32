//! `rmtif` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 estimation failure,
//! 4 too many failed simulation replicates.

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, CommandArgs};

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Estimation(String),
    Replication(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Estimation(_) => 3,
            Failure::Replication(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Estimation(m) | Failure::Replication(m) => m,
        }
    }
}

impl From<rmtif::Error> for Failure {
    fn from(e: rmtif::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Estimation(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Input(format!("cannot configure {n} threads: {e}")))?;
    }
    match cli.command {
        CommandArgs::Estimate(a) => commands::estimate(a.into_config()?),
        CommandArgs::Simulate(a) => commands::simulate(a.into_config()?),
        CommandArgs::Truth(a) => commands::truth(a.into_config()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
