mod args;
mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn threads(cmd: &Command) -> Option<usize> {
    match cmd {
        Command::Solve(a) => a.common.threads,
        Command::Sweep(a) => a.common.threads,
        Command::Networks(a) => a.common.threads,
        Command::Ensemble(a) => a.common.threads,
        Command::Regress(a) => a.common.threads,
        Command::Simulate(a) => a.common.threads,
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = threads(&cli.command) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Networks(a) => commands::networks(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Regress(a) => commands::regress(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
