use thiserror::Error;

/// Failures of the special-function layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("gamma function pole at x = {0}")]
    Pole(f64),
    #[error("result overflows the f64 range at x = {0}")]
    Overflow(f64),
    #[error("argument outside the domain: {0}")]
    Domain(String),
}

/// Failures while building or evaluating a dynamic model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid simulation grid: {0}")]
    InvalidGrid(String),
    #[error("grid step {step} s is coarser than the {max} s accuracy limit")]
    GridTooCoarse { step: f64, max: f64 },
    #[error("series did not converge at t = {t} (last partial sum {partial})")]
    Convergence { t: f64, partial: f64 },
    #[error("transfer function denominator vanishes at omega = {0}")]
    Singular(f64),
    #[error("simulation diverged at t = {t} (|theta| = {theta})")]
    Instability { t: f64, theta: f64 },
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Failures of dataset ingestion, alignment and metrics.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("times in trial '{0}' are not strictly increasing")]
    NonMonotonic(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("dataset is already normalized")]
    AlreadyNormalized,
    #[error("grid [{start}, {end}] extends beyond the span of trial '{trial}'")]
    Extrapolation { trial: String, start: f64, end: f64 },
    #[error("traces are on different time grids")]
    GridMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Failures raised by the swarm optimizer before or during a run.
#[derive(Debug, Error)]
pub enum PsoError {
    #[error("invalid PSO configuration: {0}")]
    Config(String),
    #[error("no data supplied to the fitness function")]
    NoData,
    #[error("fitness requires normalized traces (trial '{0}' is raw)")]
    RawData(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
}
