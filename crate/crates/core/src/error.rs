use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mode k={k}: {message}")]
    ModeFailure { k: f64, message: String },

    /// Collected per-mode integration failures from a full run.
    #[error("{} mode integration(s) failed; first: k={}: {}", .0.len(), .0[0].0, .0[0].1)]
    ModeFailures(Vec<(f64, String)>),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("analysis: {0}")]
    Analysis(String),
}

pub type Result<T> = std::result::Result<T, Error>;
