//! Error type shared by the whole pipeline.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (non-positive mass, near-duplicate points, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A numeric evaluation produced a non-finite value.
    #[error("non-finite result in {context}")]
    NonFinite { context: &'static str },

    /// Adaptive quadrature exhausted its panel budget.
    #[error("quadrature accuracy {achieved:.3e} did not reach requested {requested:.3e}")]
    QuadratureAccuracy { achieved: f64, requested: f64 },

    /// An operation was called with indices violating its contract.
    #[error("index contract violated: {0}")]
    IndexContract(String),

    /// Evaluation time outside the solved horizon.
    #[error("time {t} outside solved range [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    /// The charge history does not cover the requested interval.
    #[error("history gap: required coverage of [0, {t}) missing")]
    HistoryGap { t: f64 },

    /// The fixed-point corrector failed to converge even after step halving.
    #[error("fixed-point corrector diverged at t = {t} (residual {residual:.3e} after {iters} iterations, {halvings} halvings)")]
    FixedPointDiverged {
        t: f64,
        residual: f64,
        iters: u32,
        halvings: u32,
    },

    /// The brute-force reference solver detected a blow-up.
    #[error("oracle instability: |zeta| = {magnitude:.3e} at t = {t}")]
    OracleUnstable { t: f64, magnitude: f64 },

    /// Lattice solver time step violates the CFL bound dt <= h/sqrt(3).
    #[error("CFL violation: dt = {dt} exceeds h/sqrt(3) = {limit}")]
    CflViolation { dt: f64, limit: f64 },

    /// The quadrature box does not contain the interaction points with the
    /// required margin.
    #[error("quadrature box too small: {0}")]
    BoxTooSmall(String),
}

pub type Result<T> = core::result::Result<T, Error>;
