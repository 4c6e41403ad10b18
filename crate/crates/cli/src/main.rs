//! `peerchurn`: runs the churn-contagion pipeline stage by stage.

mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use peerchurn_core::Execution;

use config::RunConfig;
use manifest::Workspace;
use stages::Ctx;

#[derive(Parser, Debug)]
#[command(name = "peerchurn", version, about = "Peer influence in subscriber churn: from call records to effect estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use upstream artifacts even when their hashes no longer match.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Parse call records and aggregate monthly usage.
    Ingest,
    /// Label churners, build the friendship graph and count churner friends.
    Graph,
    /// Build survival panels and GPS cross-sections.
    Panel,
    /// Fit the frailty Cox models.
    Cox,
    /// Simulate relative hazards from the fitted contagion coefficient.
    #[command(name = "mc-hazard")]
    McHazard,
    /// Estimate dose-response curves by generalized propensity score.
    Gps,
    /// Generate a synthetic operator with known ground truth.
    Simulate,
    /// Compare estimates with the synthetic ground truth.
    Scorecard,
    /// Run every analysis stage from ingest to scorecard.
    All,
}

impl Command {
    fn stage(self) -> Option<&'static str> {
        Some(match self {
            Command::Ingest => "ingest",
            Command::Graph => "graph",
            Command::Panel => "panel",
            Command::Cox => "cox",
            Command::McHazard => "mc-hazard",
            Command::Gps => "gps",
            Command::Simulate => "simulate",
            Command::Scorecard => "scorecard",
            Command::All => return None,
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = cfg.finalize(cli.seed)?;
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ws = Workspace {
        root: cfg.output_dir.clone(),
        force: cli.force,
    };
    let ctx = Ctx {
        cfg: &cfg,
        ws: &ws,
        exec: Execution::Parallel,
    };
    match cli.command.stage() {
        Some(stage) => stages::run_stage(&ctx, stage),
        None => stages::run_all(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
