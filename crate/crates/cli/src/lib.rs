//! Command-line front end: configuration, file formats and the verbs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod traceio;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::{FitPlan, IngestPlan, LandscapePlan, Plan, PrecisionPlan, QcaPlan};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{sha256_hex, OutputDir};
use crate::verify::VerifyPlan;

#[derive(Debug, Parser)]
#[command(
    name = "qcalab",
    version,
    about = "Cost landscapes and phase learning for two-mode squeezed light"
)]
pub struct Cli {
    /// TOML study configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: qcalab-out/<command>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Samples per Monte Carlo window for `landscape --mc`.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Add Monte Carlo sweeps to `landscape`.
    #[arg(long, global = true)]
    pub mc: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic (and optionally simulated) cost against phase difference.
    Landscape,
    /// Learning runs toward the cost minimum.
    Qca,
    /// Repeated runs per squeezing level: time to solution and precision.
    Precision,
    /// Fit noise models to a landscape CSV and compare them.
    Fit {
        /// CSV with delta_phi_rad, cost and optionally cost_stderr columns.
        landscape: PathBuf,
    },
    /// Estimate the cost from a recorded homodyne trace.
    Ingest {
        /// Little-endian f64 samples, or one sample per line for `.csv`.
        trace: PathBuf,
        /// Calibration JSON [default: <TRACE>.json].
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Check the model against independent routes.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Landscape => "landscape",
            Command::Qca => "qca",
            Command::Precision => "precision",
            Command::Fit { .. } => "fit",
            Command::Ingest { .. } => "ingest",
            Command::Verify => "verify",
        }
    }
}

/// Loads the config and folds in command-line overrides.
pub fn effective_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(n) = cli.samples {
        cfg.landscape.samples = n;
    }
    if cli.mc {
        cfg.landscape.mc = true;
    }
    Ok(cfg)
}

/// Runs one command and returns the path of its `summary.json`.
pub fn run(cli: &Cli) -> CliResult<PathBuf> {
    let cfg = effective_config(cli)?;
    let plan: Box<dyn Plan> = match &cli.command {
        Command::Landscape => Box::new(LandscapePlan::new(&cfg)?),
        Command::Qca => Box::new(QcaPlan::new(&cfg)?),
        Command::Precision => Box::new(PrecisionPlan::new(&cfg)?),
        Command::Fit { landscape } => Box::new(FitPlan::new(&cfg, landscape)?),
        Command::Ingest { trace, sidecar } => {
            Box::new(IngestPlan::new(&cfg, trace, sidecar.as_deref())?)
        }
        Command::Verify => Box::new(VerifyPlan::new(&cfg)?),
    };
    let name = cli.command.name();
    let root = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("qcalab-out").join(name));
    let config_json = serde_json::to_value(&cfg).expect("serializable");
    let mut out = OutputDir::create(&root)?;
    let results = plan.execute(&mut out)?;
    let failed = results["failed"].as_u64();
    let total = results["total"].as_u64();
    let summary = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config_sha256": sha256_hex(config_json.to_string().as_bytes()),
        "config": config_json,
        "results": results,
    });
    let path = out.finish(summary)?;
    match (name, failed, total) {
        ("verify", Some(f), Some(t)) if f > 0 => Err(CliError::VerifyFailed {
            failed: f as usize,
            total: t as usize,
        }),
        _ => Ok(path),
    }
}
