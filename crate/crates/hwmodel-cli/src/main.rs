//! Command-line frontend for the hwmodel library.
//!
//! Subcommands cover geography construction, invariant-pattern enumeration,
//! stability classification, global selection, deterministic dynamics,
//! finite-population chains, two-zone bifurcation, phase partitions, and SVG
//! rendering of saved artifacts. Every run writes a `provenance.json` next
//! to its outputs recording the resolved configuration, versions, seed, and
//! wall time.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 1 for
//! numerical or I/O failures at runtime.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hwmodel", version, about = "Retail agglomeration model toolkit")]
pub struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts and provenance (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all logical CPUs).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Table format: csv writes CSV tables next to the JSON artifacts,
    /// json writes the JSON artifacts only.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the model-facing subcommands. Every value is optional
/// here; defaults are materialized after the config file is merged in.
#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Geography: ring:K, square:N, tri:N, or a path to a geography JSON.
    #[arg(long, value_name = "KIND:N|PATH")]
    pub geo: Option<String>,
    /// Returns-to-scale exponent (default 1.2).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Travel freeness in (0,1); mutually exclusive with --beta.
    #[arg(long, conflicts_with = "beta")]
    pub phi: Option<f64>,
    /// Travel cost rate; phi = exp(-beta).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Master seed for stochastic components (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Primary tolerance of the subcommand (tie, verdict, or residual).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a geography and write it as JSON.
    Geom {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Enumerate invariant support patterns; prints the catalog size.
    Enumerate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Classify local stability of invariant patterns at a point, or scan
    /// phi for stability and global-winner intervals with --grid-phi.
    Stability {
        #[command(flatten)]
        model: ModelArgs,
        /// Restrict to one catalog id.
        #[arg(long)]
        pattern: Option<u32>,
        /// Scan phi over a:b:step and report intervals instead of a point.
        #[arg(long, value_name = "A:B:STEP")]
        grid_phi: Option<String>,
    },
    /// Pick the potential-maximizing pattern at one parameter point.
    Select {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Sample basins of attraction, or integrate one trajectory with --x0.
    Dynamics {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of random starts for basin sampling (default 100).
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated start state; switches to single-trajectory mode.
        #[arg(long, value_name = "X0,X1,...")]
        x0: Option<String>,
    },
    /// Finite-population logit chain: exact stationary law, potential fit,
    /// and jump-chain simulation.
    Chain {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of agents (default 8).
        #[arg(long = "N")]
        n_agents: Option<usize>,
        /// Logit noise level (default 0.05).
        #[arg(long)]
        eta: Option<f64>,
        /// Simulated jump count (default 0: exact solve only).
        #[arg(long)]
        jumps: Option<u64>,
    },
    /// Two-zone bifurcation diagram with threshold detection.
    Bifurcate {
        #[command(flatten)]
        model: ModelArgs,
        /// Phi grid a:b:step (default 0.01:0.99:0.01).
        #[arg(long, value_name = "A:B:STEP")]
        grid_phi: Option<String>,
    },
    /// Global-winner partition of the (phi, alpha) plane.
    Partition {
        #[command(flatten)]
        model: ModelArgs,
        /// Phi grid a:b:step (default 0.01:0.99:0.01).
        #[arg(long, value_name = "A:B:STEP")]
        grid_phi: Option<String>,
        /// Alpha grid a:b:step (default 1.0:3.0:0.05).
        #[arg(long, value_name = "A:B:STEP")]
        grid_alpha: Option<String>,
    },
    /// Render an SVG from a saved JSON artifact (bifurcation.json,
    /// partition.json, or stability_ranges.json).
    Plot {
        /// Path to the JSON artifact.
        input: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Geom { .. } => "geom",
            Command::Enumerate { .. } => "enumerate",
            Command::Stability { .. } => "stability",
            Command::Select { .. } => "select",
            Command::Dynamics { .. } => "dynamics",
            Command::Chain { .. } => "chain",
            Command::Bifurcate { .. } => "bifurcate",
            Command::Partition { .. } => "partition",
            Command::Plot { .. } => "plot",
        }
    }
}

fn exit_code(e: &hwmodel::Error) -> u8 {
    use hwmodel::Error;
    match e {
        Error::InvalidParameter(_) | Error::InvalidGeography(_) | Error::Unsupported(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
