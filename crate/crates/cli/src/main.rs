mod args;
mod commands;
mod error;
mod oracles;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Attribute(a) => commands::cmd_attribute(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Ablate(a) => commands::cmd_ablate(a),
    }
}

fn jobs(command: &Command) -> Option<usize> {
    match command {
        Command::Attribute(a) => a.common.jobs,
        Command::Evaluate(a) => a.common.jobs,
        Command::Ablate(a) => a.common.jobs,
    }
}

#[cfg(feature = "parallel")]
fn run(command: &Command) -> Result<(), CliError> {
    match jobs(command) {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Invariant(format!("cannot start thread pool: {e}")))?
            .install(|| dispatch(command)),
        None => dispatch(command),
    }
}

#[cfg(not(feature = "parallel"))]
fn run(command: &Command) -> Result<(), CliError> {
    if jobs(command) == Some(0) {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    dispatch(command)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
