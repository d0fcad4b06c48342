//! `bflow`: exact intensity flows, population simulations, particle
//! approximations and verification runs from a TOML config.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 on
//! usage, configuration or runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use branching_flow::harness::CheckId;
use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, ScenarioConfig, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "bflow", version, about = "Intensity flows of branching processes with immigration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact flow, semigroup constants and long-time quantities.
    Exact(Common),
    /// Replicates of the branching population.
    Simulate(Common),
    /// Mean-field particle runs over the configured N grid.
    Particles(Common),
    /// Statistical checks against the exact flow.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated check ids (default: all, or `verify.checks`).
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Adds a bias to every estimator; every check should then fail.
        #[arg(long, num_args = 0..=1, default_missing_value = "0.1", value_name = "BIAS")]
        self_test: Option<f64>,
    },
}

enum Outcome {
    Done,
    Failed,
}

fn load(common: &Common, required: bool) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None if required => anyhow::bail!("--config is required"),
        None => RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: None,
            scenario: ScenarioConfig {
                builtin: Some("s-one".into()),
                ..Default::default()
            },
            engine: Default::default(),
            output: Default::default(),
            verify: Default::default(),
        },
    };
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn prepare(cfg: &RunConfig) -> Result<(u64, PathBuf)> {
    let seed = cfg.seed()?;
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((seed, dir))
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Exact(common) => {
            let cfg = load(&common, true)?;
            let (_, dir) = prepare(&cfg)?;
            commands::exact(&cfg, &dir)?;
        }
        Command::Simulate(common) => {
            let cfg = load(&common, true)?;
            let (seed, dir) = prepare(&cfg)?;
            commands::simulate(&cfg, seed, &dir)?;
        }
        Command::Particles(common) => {
            let cfg = load(&common, true)?;
            let (seed, dir) = prepare(&cfg)?;
            commands::particles(&cfg, seed, &dir)?;
        }
        Command::Verify {
            common,
            checks,
            self_test,
        } => {
            let cfg = load(&common, false)?;
            let ids = match checks.or_else(|| cfg.verify.checks.clone()) {
                Some(list) => commands::parse_checks(&list)?,
                None => CheckId::ALL.to_vec(),
            };
            let (seed, dir) = prepare(&cfg)?;
            let corruption = self_test.or(cfg.verify.corruption);
            let report = commands::verify(&cfg, seed, &ids, corruption, &dir)?;
            for s in &report.checks {
                println!(
                    "{:<17} {}  {} comparisons, {} failed",
                    s.check.as_str(),
                    if s.passed { "PASS" } else { "FAIL" },
                    s.comparisons,
                    s.failures
                );
            }
            for (check, t) in &report.runtime {
                eprintln!("{check}: {:.2} s", t.as_secs_f64());
            }
            if !report.passed {
                for f in report.failures().take(20) {
                    eprintln!("failed {}/{}: statistic {}", f.check, f.id, f.statistic);
                }
                return Ok(Outcome::Failed);
            }
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
