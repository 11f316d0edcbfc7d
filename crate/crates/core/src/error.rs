use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter vector outside the open domain of a correlation family.
    #[error("parameter {theta:?} is outside the domain of the {family} family")]
    Domain { family: String, theta: Vec<f64> },

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (Cholesky pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// Nuisance information too close to singular to invert reliably.
    #[error("ill-conditioned information matrix (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid arguments or data (non-finite entries, bad dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// No closed-form expression is known for the requested case.
    #[error("closed form not available: {0}")]
    NotAvailable(String),

    /// The zero-diagonal condition `diag((A + A')C) = 0` failed, typically
    /// because the equal-variance regime was used for a family without
    /// constant `diag(B C_θk)`.
    #[error("A-matrix condition violated for parameter {k}: max |diag((A+A')C)| = {residual:e}")]
    AMatrixCondition { k: usize, residual: f64 },

    /// A Monte Carlo replicate failed; the seed reproduces it.
    #[error("replicate {rep} (seed {seed}) failed: {source}")]
    Replicate {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's parameters rather than by a
    /// numerical failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::InvalidInput(_)
                | Error::Shape(_)
                | Error::NotAvailable(_)
                | Error::AMatrixCondition { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
