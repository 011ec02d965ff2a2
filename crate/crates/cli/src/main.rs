//! `salbias`: saliency-bias audit pipeline and annotation-study server.
//!
//! Failures print one line `error[<Kind>]: <message>` on stderr and exit
//! nonzero (2 for bad flags, 1 otherwise).

mod args;
mod commands;
mod error;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => fail(&CliError::BadFlag(
            e.render()
                .to_string()
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string(),
        )),
    };
    let level = if cli.common.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if cli.common.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.jobs)
            .build_global()
        {
            log::warn!("could not size worker pool: {e}");
        }
    }
    if let Err(e) = commands::run(cli.command, &cli.common) {
        fail(&e);
    }
}

fn fail(e: &CliError) -> ! {
    let message = e.to_string().replace('\n', " ");
    eprintln!("error[{}]: {message}", e.kind());
    std::process::exit(e.exit_code());
}
