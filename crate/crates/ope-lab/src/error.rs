//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by environment validation, fitting, and estimation.
#[derive(Debug, Error)]
pub enum OpeError {
    /// A probability vector or stochastic-matrix row failed validation.
    #[error("{what} is not a probability vector (sum = {sum}, min = {min})")]
    NotAProbability { what: String, sum: f64, min: f64 },

    /// A spec field is outside its admissible range.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Mismatched dimensions between a dataset and a policy or feature map.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A tabular estimator is undefined on states never visited in the data.
    #[error("states never visited in the dataset: {states:?}; the conditional frequency estimator is undefined there")]
    UnvisitedStates { states: Vec<usize> },

    /// A needed (context, action) cell has zero count.
    #[error("cell (context {context}, action {action}) never visited; estimate undefined")]
    UnvisitedCell { context: usize, action: u32 },

    /// The behavior model assigns probability zero to an observed action.
    #[error("behavior probability is zero for observed action {action} (trajectory {traj}, step {t})")]
    ZeroBehaviorProbability { traj: usize, t: usize, action: u32 },

    /// A moment matrix could not be inverted at ridge zero.
    #[error("singular moment matrix at step {t} with ridge 0; rerun with a positive ridge")]
    SingularMoment { t: usize },

    /// Too little data for the requested operation.
    #[error("not enough data: {0}")]
    NotEnoughData(String),

    /// Invalid run configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, OpeError>;
