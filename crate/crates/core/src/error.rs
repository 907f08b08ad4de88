//! Error type shared across the library.

/// Errors reported by the numerical kernels and I/O routines.
///
/// Numerical *outcomes* (divergence, iteration caps) are not errors; they are
/// carried by [`crate::refine::RefineStatus`]. `Error` covers contract
/// violations: bad shapes, unreadable files, singular or indefinite inputs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("column {column} became numerically rank deficient during orthonormalization")]
    RankDeficient { column: usize },

    #[error(
        "leading block of the WY factor is numerically singular \
         (pivot {pivot:.3e} at column {column}); use the LU-based construction"
    )]
    Y1Singular { column: usize, pivot: f64 },

    #[error("zero pivot at column {column} in the shifted LU factorization")]
    ZeroPivot { column: usize },

    #[error("Gram matrix is not positive definite (pivot {pivot:.3e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error(
        "Rayleigh quotient {value:.3e} of column {column} lies within the cluster \
         threshold {delta:.3e} of zero; refine a shifted spectrum instead"
    )]
    NearZeroRayleigh { column: usize, value: f64, delta: f64 },

    #[error("matrix market: {0}")]
    Market(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
