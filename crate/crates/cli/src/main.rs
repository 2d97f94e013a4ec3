use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slogit::Job;

#[derive(Parser)]
#[command(
    name = "slogit",
    version,
    about = "Sampling logit equilibrium experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one job and write its tables and manifest into a directory.
    Run {
        /// choice-curves, sle-vs-eta, phase-portrait, premium-profiles,
        /// error-audit, interior-shift or potential-profiles
        job: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        job,
        config,
        out,
        seed,
    } = Cli::parse().command;
    let result = Job::parse(&job).and_then(|job| slogit::run(job, &config, &out, seed));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
