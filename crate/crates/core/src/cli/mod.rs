//! Command-line front end: `analyze`, `optimize`, `simulate` and `sweep`.
//!
//! Every command reads a configuration file (see [`config`]), writes CSV to
//! stdout or, with `--out DIR`, to files in `DIR` together with a
//! `manifest.json`, and prints a short human summary on stderr.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{run, CliError, ExitStatus, RunManifest};
pub use config::{parse_config, ConfigError, ConfigFile, Diagnostic};

#[derive(Debug, Parser)]
#[command(name = "cogharvest", version, about = "Energy-harvesting cognitive radio: analysis, optimisation and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady state, outages, rate bound and interference of the configured policies.
    Analyze(AnalyzeArgs),
    /// Maximise the sum-rate bound under the interference cap.
    Optimize(OptimizeArgs),
    /// Monte Carlo simulation compared against the analytic values.
    Simulate(SimulateArgs),
    /// Sweep one parameter and tabulate the rate bound and auxiliaries.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Directory for CSV files and the run manifest (stdout otherwise).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Force a perfect detector (no false alarms, no missed detections).
    #[arg(long)]
    pub ideal_sensing: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SearchArgs {
    /// Coarse grid points on omega.
    #[arg(long, value_name = "N")]
    pub grid_omega: Option<usize>,
    /// Coarse grid points on theta.
    #[arg(long, value_name = "N")]
    pub grid_theta: Option<usize>,
    /// Local refinement levels.
    #[arg(long, value_name = "L")]
    pub refine: Option<usize>,
    /// Coordinate sweeps per refinement level.
    #[arg(long, value_name = "N")]
    pub max_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write each SU's transition matrix (needs --out).
    #[arg(long)]
    pub dump_matrix: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShortfallArg {
    Drain,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpendArg {
    /// Gain drawn from the law of the true hypothesis.
    True,
    /// Gain always drawn from the idle-hypothesis law.
    Idle,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write every simulated slot (needs --out).
    #[arg(long)]
    pub dump_trace: bool,
    /// Behaviour when the battery cannot pay for probing.
    #[arg(long, value_enum, default_value_t = ShortfallArg::Drain)]
    pub shortfall: ShortfallArg,
    /// Gain law that drives the spent level.
    #[arg(long, value_enum, default_value_t = SpendArg::True)]
    pub spend: SpendArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "tau_s")]
    TauS,
    #[value(name = "alpha_t")]
    AlphaT,
    #[value(name = "omega")]
    Omega,
    #[value(name = "theta")]
    Theta,
    #[value(name = "K")]
    K,
    #[value(name = "rho")]
    Rho,
    #[value(name = "I_av")]
    IAv,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::TauS => "tau_s",
            Axis::AlphaT => "alpha_t",
            Axis::Omega => "omega",
            Axis::Theta => "theta",
            Axis::K => "K",
            Axis::Rho => "rho",
            Axis::IAv => "I_av",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_enum)]
    pub axis: Axis,
    #[arg(long, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 11)]
    pub points: usize,
    /// Log-spaced points.
    #[arg(long)]
    pub log: bool,
    /// Optimise the policies at every point (always on for I_av).
    #[arg(long)]
    pub optimize: bool,
}
