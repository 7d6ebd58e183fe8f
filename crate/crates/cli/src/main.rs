mod cli;
mod commands;
mod config;
mod svg;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use config::{CliResult, ConfigFile};

fn run(cli: Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Scan(a) => commands::scan(a, file),
        Command::Calibrate(a) => commands::calibrate_cmd(a, file),
        Command::Fit(a) => commands::fit(a, file),
        Command::Sensitivity(a) => commands::sensitivity(a, file),
        Command::Subrayleigh(a) => commands::subrayleigh(a, file),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fockscan: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
