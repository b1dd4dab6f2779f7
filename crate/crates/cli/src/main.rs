mod args;
mod commands;
mod error;
mod io;
mod model;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FileConfig};
use error::{CliError, CliResult};

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed);
    if let Some(n) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::input(format!("cannot set thread count: {e}")))?;
    }
    match cli.command {
        Command::Ingest(mut a) => {
            a.merge(&file.ingest);
            commands::ingest(&a)
        }
        Command::Simulate(mut a) => {
            a.merge(&file.simulate);
            commands::simulate_cmd(&a, seed)
        }
        Command::Durations(c) => commands::durations(&c, &file.durations),
        Command::Deseason(mut a) => {
            a.merge(&file.deseason);
            commands::deseason(&a)
        }
        Command::Fit(mut a) => {
            a.merge(&file.fit);
            commands::fit_cmd(&a, seed)
        }
        Command::Diagnose(mut a) => {
            a.merge(&file.diagnose);
            commands::diagnose_cmd(&a)
        }
        Command::Gof(mut a) => {
            a.merge(&file.gof);
            commands::gof_cmd(&a, seed)
        }
        Command::Pipeline(mut a) => {
            a.merge(&file.pipeline);
            pipeline::pipeline(&a, seed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
