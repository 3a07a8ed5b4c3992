//! `l0robust` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data error, 4
//! numerical failure.

mod commands;
mod config;
mod error;
mod io;

use clap::Parser;

use config::{Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = match &cli.command {
        Command::Fit { common, .. } | Command::Tune { common, .. } | Command::Forecast { common, .. } | Command::Simulate { common, .. } => {
            common.threads
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    match &cli.command {
        Command::Fit { input, method, common } => commands::fit(input, method, common),
        Command::Tune { input, method, max_k, l, common } => commands::tune(input, *method, *max_k, *l, common),
        Command::Forecast { input, window, periods, method, common } => commands::forecast(input, *window, periods, method, common),
        Command::Simulate { config, common } => commands::simulate(config, common),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
