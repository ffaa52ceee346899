use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an input argument was violated.
    InvalidArgument(&'static str),
    DimensionMismatch { expected: usize, found: usize },
    /// Cholesky factorization hit a non-positive pivot.
    NotPositiveDefinite { pivot: usize, value: f64 },
    /// LU factorization of a dense matrix hit a zero pivot, or the
    /// condition estimate exceeded the configured limit.
    Singular { condition: f64 },
    /// Conjugate gradients met a direction with `p·Ap <= 0`.
    NegativeCurvature { iteration: usize, curvature: f64 },
    NotConverged { iterations: usize, residual: f64 },
    /// Newton iteration for the normalization system failed.
    NewtonFailure { iterations: usize, residual: f64 },
    /// Gram-Schmidt produced a (numerically) vanishing vector.
    Breakdown { vector: usize, norm: f64 },
    Parse { line: usize, message: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NotPositiveDefinite { pivot, value } => {
                write!(f, "matrix not positive definite (pivot {pivot} = {value:e})")
            }
            Error::Singular { condition } => {
                write!(f, "matrix singular or ill-conditioned (condition ~ {condition:e})")
            }
            Error::NegativeCurvature { iteration, curvature } => write!(
                f,
                "conjugate gradients detected negative curvature {curvature:e} at iteration {iteration}; \
                 the operator is indefinite (bad shift?)"
            ),
            Error::NotConverged { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (residual {residual:e})")
            }
            Error::NewtonFailure { iterations, residual } => write!(
                f,
                "newton normalization failed after {iterations} iterations (residual {residual:e})"
            ),
            Error::Breakdown { vector, norm } => write!(
                f,
                "gram-schmidt breakdown at vector {vector} (norm {norm:e}); \
                 try a smaller subspace or a richer index set"
            ),
            Error::Parse { line, message } => write!(f, "parse error on line {line}: {message}"),
        }
    }
}

impl core::error::Error for Error {}
