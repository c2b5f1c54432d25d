//! Probabilistic exponential control barrier function (eCBF) safety filters
//! for relative-degree-two vehicle systems under Gaussian velocity noise.
//!
//! The crate provides:
//!
//! - the eCBF machinery itself: barrier derivative stacks, pole-parameterized
//!   gains, and the pointwise safety residuals ([`ecbf`]);
//! - Gaussian chance-constraint tightening with a high-accuracy inverse
//!   normal CDF ([`norm`], [`stochastic`]);
//! - a small-angle kinematic bicycle model ([`vehicle`]);
//! - longitudinal gap barriers for lane changes and 1-norm box barriers for
//!   intersections, each exposing their constraints as explicit functions of
//!   the control input and the noise ([`lane_change`], [`intersection`]);
//! - a safety-filter controller that selects both the input and the barrier
//!   gains at every step by enumerating pole candidates and disjunction
//!   branches over small exact convex subproblems ([`controller`], [`qp`]);
//! - a Monte Carlo simulation harness with seeded, variant-independent noise
//!   streams, trial records, and batch statistics ([`scenario`], [`sim`],
//!   [`batch`]).
//!
//! The `pecbf` binary wraps the harness in a CLI (`run`, `batch`,
//! `calibrate`, `replay`).

pub mod batch;
pub mod config;
pub mod controller;
pub mod ecbf;
pub mod intersection;
pub mod lane_change;
pub mod nominal;
pub mod norm;
pub mod qp;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod stochastic;
pub mod vehicle;

#[cfg(test)]
pub(crate) mod testutil;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or scenario parameters (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),
    /// Internal solver failure such as non-finite arithmetic (CLI exit code 3).
    #[error("solver error: {0}")]
    Solver(String),
    /// Malformed or unreadable record / config file.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
