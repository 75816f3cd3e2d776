//! Command-line driver: bound tables, embedding runs, Rademacher estimates,
//! excess-risk sweeps and the worked-example reproduction.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use embedbound::bounds::BoundError;
use embedbound::experiment::ExperimentError;
use embedbound::learner::LearnError;
use embedbound::optim::OptimError;
use embedbound::rademacher::RcError;
use embedbound::spaces::GeometryError;

pub mod commands;
pub mod config;
pub mod output;

#[derive(Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::NonFiniteGradient | GeometryError::Calibration(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            OptimError::Geometry(g) => g.into(),
            OptimError::InvalidOptions(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Optim(o) => o.into(),
            LearnError::Geometry(g) => g.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        match e {
            BoundError::Optim(o) => o.into(),
            BoundError::Geometry(g) => g.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RcError> for CliError {
    fn from(e: RcError) -> Self {
        match e {
            RcError::TooManyDrops { .. } => CliError::Numerical(e.to_string()),
            RcError::Learn(l) => l.into(),
            RcError::Optim(o) => o.into(),
            RcError::Bound(b) => b.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Learn(l) => l.into(),
            ExperimentError::Bound(b) => b.into(),
            ExperimentError::Invalid(_) => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "embedbound",
    version,
    about = "Generalization bounds and experiments for graph embeddings"
)]
pub struct Cli {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate table over a grid of sample sizes.
    Bounds,
    /// Embed a graph by clipped ERM or by the Sarkar construction.
    Embed,
    /// Monte-Carlo Rademacher complexity against the bounds.
    RcEstimate,
    /// Excess-risk sweep against the local bound.
    Experiment,
    /// Worked-example numbers.
    Reproduce {
        #[command(subcommand)]
        which: Reproduction,
    },
}

#[derive(Debug, Subcommand)]
pub enum Reproduction {
    /// Sample-size thresholds for the 156-entity tree.
    Example43 {
        /// Violation count behind the headline thresholds.
        #[arg(long)]
        v_min: Option<usize>,
    },
    /// Old-bound threshold for the same tree.
    Remark62d {
        #[arg(long)]
        lip_g2: Option<f64>,
    },
}

/// Runs the tool and returns its exit code. Errors go to stderr as one JSON
/// object; on success the written paths go to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return report(&CliError::Usage(e.to_string().trim().to_string()));
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            let list: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            println!("{}", json!({ "outputs": list }));
            0
        }
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!(
        "{}",
        json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
    );
    e.exit_code()
}

pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let pool = match cli.threads {
        Some(0) => return Err(CliError::Validation("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| commands::dispatch(cli))
}
