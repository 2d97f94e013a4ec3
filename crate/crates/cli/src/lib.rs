//! Config-driven experiment runner for sampling logit equilibria.
//!
//! `slogit run <job> --config <path> --out <dir> [--seed N]` validates the
//! configuration, computes the job's tables and writes them with a manifest.

pub mod config;
pub mod jobs;
pub mod output;
pub mod table;

use std::path::Path;

use anyhow::{Context, Result};

pub use config::{Config, Game, Job};
pub use table::Table;

/// Parses and validates `config_text`, then computes the job's tables.
pub fn compute(job: Job, config_text: &str, seed: u64) -> Result<(Config, Vec<Table>)> {
    let config = Config::parse(config_text)?;
    let game = config.validate(job)?;
    let tables = jobs::run(job, &config, &game, seed)
        .with_context(|| format!("job {} failed", job.name()))?;
    Ok((config, tables))
}

/// Full run: read the config, compute, write `out` atomically.
pub fn run(job: Job, config_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let (config, tables) = compute(job, &text, seed)?;
    output::write_run(out, job, &text, &config, seed, &tables)
}
