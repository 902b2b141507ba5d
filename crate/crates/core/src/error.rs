use thiserror::Error;

/// Errors raised across the simulation laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite multiplier symbol at wavenumber {k:?}")]
    NonFiniteSymbol { k: Vec<f64> },

    #[error("ground-state iteration did not converge after {iterations} iterations (residual {residual:e})")]
    IterationFailure { iterations: usize, residual: f64 },

    #[error("ground-state iteration collapsed to the zero field")]
    DegenerateFixedPoint,

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("non-finite field values after step at t = {t}")]
    NumericOverflow { t: f64 },

    #[error("singular initial data: {0}")]
    Singularity(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("inconclusive fit: {0}")]
    Inconclusive(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
