use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("frequency index {r} out of range for grid size {n}")]
    FrequencyOutOfRange { r: usize, n: usize },

    #[error("grid size must be positive")]
    EmptyGrid,

    #[error("empty input vector")]
    EmptyInput,

    #[error("support set is empty")]
    EmptySupport,

    #[error("support index {index} outside grid of size {n}")]
    SupportOutOfRange { index: usize, n: usize },

    #[error("leakage support does not match the support of the sparse vector")]
    SupportMismatch,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{name} is not Hermitian (deviation {deviation:e})")]
    NotHermitian { name: &'static str, deviation: f64 },

    #[error("{name} is not positive definite")]
    NotPositiveDefinite { name: &'static str },

    #[error(
        "prior covariance is singular (min eigenvalue {min_eigenvalue:e} below floor {floor:e}); \
         increase Q or the initial covariance"
    )]
    SingularCovariance { min_eigenvalue: f64, floor: f64 },

    #[error("Gram matrix is rank deficient (min eigenvalue {min_eigenvalue:e})")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("estimate vanished at iteration {iteration}")]
    ZeroEstimate { iteration: usize },

    #[error("reconstruction diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("eigen/singular value decomposition failed to converge")]
    Decomposition,
}

pub type Result<T> = std::result::Result<T, Error>;
