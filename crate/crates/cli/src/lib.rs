//! Configuration-driven front end: each subcommand loads a JSON analysis
//! configuration, runs the corresponding analyses and emits a report.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::AnalysisConfig;
pub use error::{CliError, CliResult};
pub use report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "passquant", about = "Passivity degradation, loop bounds and symbolic control checks")]
pub struct Cli {
    /// Analysis configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for randomized checks and disturbances.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sampled and quantized passivity indices.
    Degrade,
    /// Indices of the feedback interconnection.
    Compose,
    /// Strong detectability certificates.
    Sd,
    /// Global and ultimate bound levels with the margin condition.
    Bound,
    /// Bisimulation parameter condition of the symbolic controller.
    AbstractCheck,
    /// Closed-loop simulation with CSV output.
    Simulate,
    /// Dissipation and bound audits of a recorded trajectory.
    Audit {
        /// Trajectory CSV written by `simulate`.
        #[arg(long)]
        trajectory: PathBuf,
    },
}

/// Runs one command and returns its report.
pub fn run(cli: &Cli) -> CliResult<Report> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = AnalysisConfig::load(path)?;
    match &cli.command {
        Command::Degrade => commands::cmd_degrade(&cfg),
        Command::Compose => commands::cmd_compose(&cfg),
        Command::Sd => commands::cmd_sd(&cfg, cli.seed),
        Command::Bound => commands::cmd_bound(&cfg, cli.seed),
        Command::AbstractCheck => commands::cmd_abstract_check(&cfg),
        Command::Simulate => commands::cmd_simulate(&cfg, cli.out.as_deref(), cli.seed),
        Command::Audit { trajectory } => commands::cmd_audit(&cfg, trajectory, cli.seed),
    }
}
