use thiserror::Error;

/// Errors raised by model validation, the solvers and the simulators.
#[derive(Debug, Error)]
pub enum MfgError {
    #[error("initial law is not a probability vector: {0}")]
    NonSimplexInitial(String),
    #[error("not a probability vector: {0}")]
    NonSimplex(String),
    #[error("negative transition rate {rate} for {from}->{to}")]
    NegativeRate { from: usize, to: usize, rate: f64 },
    #[error("transition rate {rate} for {from}->{to} exceeds the bound {bound}")]
    RateExceedsBound {
        from: usize,
        to: usize,
        rate: f64,
        bound: f64,
    },
    #[error("horizon must be positive, got {0}")]
    DegenerateHorizon(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),
    #[error("cumulative mass renormalization {0:e} exceeds 1e-9")]
    MassLoss(f64),
    #[error("negative mass {value:e} in state {state} at node {node}")]
    NegativeMass {
        node: usize,
        state: usize,
        value: f64,
    },
    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("operation requires the {0} model family")]
    FamilyUnsupported(&'static str),
    #[error("transition rates depend on the measure argument; monotonicity theorem does not apply")]
    RateDependsOnMeasure,
    #[error("joint state space of {states} states exceeds the cap {cap}")]
    StateSpaceTooLarge { states: u128, cap: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MfgError>;
