//! `wam`: generate synthetic data, train the built-in classifiers, compute
//! wavelet attributions, evaluate them and run the experiment recipes.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error, 4 backend
//! failure.

mod args;
mod backend;
mod commands;
mod manifest;
mod recipes;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use wam_core::{ErrorKind, WamError};

use crate::args::Cli;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<WamError>() {
            return match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Backend => 4,
            };
        }
    }
    3
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let start = Instant::now();
    commands::dispatch(cli)?;
    manifest::RunManifest::collect(cli, start.elapsed())?.write(&cli.out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
