use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes or qubit counts do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A noise rate lies outside the range where the channel stays completely
    /// positive (all mixture coefficients nonnegative).
    #[error("noise rate {rate} outside physical range [0, {max}] for {kind}")]
    RateOutOfRange {
        kind: &'static str,
        rate: f64,
        max: f64,
    },

    /// Dense reference objects are capped to keep memory and runtime bounded.
    #[error("dense reference limited to {limit} qubits, got {requested}")]
    DenseCapExceeded { limit: usize, requested: usize },

    /// Matrix inversion failed or left a residual above the safety threshold.
    #[error("operator inversion failed: {0}")]
    SingularOperator(String),

    /// A circuit description violates its own structural rules.
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    /// State-simulation trace drifted further from 1 than the configured
    /// budget allows; the simulation bond cap is too small for this circuit.
    #[error("trace drift {drift:.3e} exceeds budget {budget:.3e}; raise the state bond cap")]
    TraceDrift { drift: f64, budget: f64 },

    /// Binary tensor files with a bad magic, version, or payload.
    #[error("serialization: {0}")]
    Serialization(String),

    /// Invalid run or experiment configuration.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// LAPACK/BLAS failure surfaced by the linear-algebra backend.
    #[error("linear algebra backend: {0}")]
    Backend(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Backend(e.to_string())
    }
}

impl From<ndarray::ShapeError> for Error {
    fn from(e: ndarray::ShapeError) -> Self {
        Error::DimensionMismatch(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
