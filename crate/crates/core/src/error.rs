use thiserror::Error;

use crate::qca::QcaRunRecord;

/// Errors raised by the model, simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integration grid too small: {0}")]
    GridTooSmall(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("non-positive corrected variance {0:e}")]
    NonPositiveVariance(f64),

    #[error("no physical root: {0}")]
    NoPhysicalRoot(String),

    #[error("minimum not bracketed: {0}")]
    MinimumNotBracketed(String),

    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    #[error("all {0} runs failed to converge")]
    AllRunsFailed(usize),

    #[error("schedule stage {stage} did not converge")]
    StageFailed {
        stage: usize,
        partial: Box<Vec<QcaRunRecord>>,
    },

    #[error("cost evaluation failed at iteration {iteration}: {source}")]
    EvaluatorFailed {
        iteration: usize,
        source: Box<Error>,
        partial: Box<QcaRunRecord>,
    },

    #[error("fits were computed on different data")]
    MismatchedData,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
