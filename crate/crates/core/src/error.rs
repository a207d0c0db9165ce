use thiserror::Error;

/// Errors raised by path queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("arc length {s} outside path range [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("point ({x:.3}, {y:.3}) does not project onto the path corridor")]
    NoProjection { x: f64, y: f64 },
    #[error("invalid path geometry: {0}")]
    Geometry(String),
}

/// Errors raised by the vehicle models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("curvilinear singularity: |1 - kappa*d| = {0:e} at the linearization point")]
    Singularity(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

/// Configuration problems detected at load or build time.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("closed loop is not stable: {0}")]
    Unstable(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Top-level error for simulation runs.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("numerical failure at step {step}: {message}")]
    Numerical { step: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<PathError> for SimError {
    fn from(e: PathError) -> Self {
        SimError::Config(e.into())
    }
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::Config(e.into())
    }
}
