// SPDX-License-Identifier: Apache-2.0
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {dim}: {reason}")]
    InvalidDimension { dim: usize, reason: String },
    #[error("label not found: {0}")]
    LabelNotFound(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient charge cutoff: level {level} moved by {rel_change:.3e} (relative) on doubling")]
    InsufficientCutoff { level: usize, rel_change: f64 },
    #[error("variant/field mismatch: {0}")]
    VariantMismatch(String),
    #[error("mixing angle undefined for degenerate modes with zero coupling")]
    UndefinedMixingAngle,
    #[error("cannot identify dressed state {label}: best overlap {overlap:.3}")]
    BranchIdentification { label: String, overlap: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("steady state not unique: null space dimension {0}")]
    NonUniqueSteadyState(usize),
    #[error("correlation not decayed at horizon: residual {0:.3e}")]
    HorizonTooShort(f64),
    #[error("fit failed: residual {0:.3e} of initial coherence")]
    FitFailed(f64),
    #[error("optimizer did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
