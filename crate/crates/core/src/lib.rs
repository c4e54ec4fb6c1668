//! Analytic model of an energy-harvesting opportunistic cognitive-radio uplink.
//!
//! Secondary users (SUs) share the band of a primary user (PU). Each slot an
//! SU senses the band with an energy detector; when the band looks idle it
//! spends `probe_cells` battery cells on pilots so the access point can
//! estimate the channel, then spends a number of cells on data chosen by a
//! two-parameter policy `(omega, theta)` from its battery level and the fed
//! back channel gain. Energy arrives as Poisson packets into a battery of
//! `battery_cells` cells.
//!
//! The crate evaluates everything in closed form:
//!
//! * [`sensing`]: detector false-alarm/detection probabilities and the joint
//!   sensing-outcome probabilities,
//! * [`probing`]: LMMSE estimator variances and the per-hypothesis
//!   exponential law of the estimated gain,
//! * [`policy`]: the power policy, its breakpoints and conditional pmf,
//! * [`battery`]: the battery Markov chain and its steady state,
//! * [`rate`]: the achievable-rate lower bound, interference constraint and
//!   outage metrics,
//! * [`optimizer`]: constrained maximisation of the sum-rate bound,
//!
//! and ships a slot-level Monte Carlo simulator ([`simcore`]) that serves as an
//! independent oracle for all of the above. The [`cli`] module implements the
//! `analyze`, `optimize`, `simulate` and `sweep` commands behind the thin
//! `cogharvest` binary.

pub mod analysis;
pub mod battery;
pub mod cli;
pub mod model;
pub mod optimizer;
pub mod policy;
pub mod probing;
pub mod rate;
pub mod sensing;
pub mod simcore;

pub use analysis::{analyze_network, analyze_su, NetworkAnalysis, SuAnalysis};
pub use model::{Model, PolicyParams, SuProfile, SystemConfig};

use thiserror::Error;

/// Errors produced by the analytic pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] model::ValidationError),

    #[error("chain not ergodic under these parameters ({context}): {reason}")]
    NotErgodic { context: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid policy parameters: {0}")]
    InvalidPolicy(String),
}

pub type Result<T> = std::result::Result<T, Error>;
