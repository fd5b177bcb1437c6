//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by network validation, model evaluation, estimation, and
/// the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown link id `{0}`")]
    UnknownLink(String),

    #[error("unknown route id `{0}`")]
    UnknownRoute(String),

    #[error("link `{0}` has non-positive cost {1}")]
    NonPositiveCost(String, f64),

    #[error("route `{0}` is empty")]
    EmptyRoute(String),

    #[error("route `{route}` repeats link `{link}`")]
    RepeatedLink { route: String, link: String },

    #[error("routes `{0}` and `{1}` have identical link sets")]
    DuplicateRoute(String, String),

    #[error("route set has no routes")]
    NoRoutes,

    #[error("operation requires at least {required} routes, got {got}")]
    TooFewRoutes { required: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("generating function input must be strictly positive (entry {index} is {value})")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "systematic utility must be negative for multiplicative-family vectors \
         (route `{route}` has V = {value}); lower the constant c"
    )]
    InvalidUtility { route: String, value: f64 },

    #[error(
        "degenerate route pair `{a}` / `{b}`: the non-overlapping part has \
         non-positive generalized cost"
    )]
    DegeneratePair { a: String, b: String },

    #[error("route `{route}` has no links outside reference `{reference}`")]
    DegenerateRoute { route: String, reference: String },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("covariance matrix is not positive semidefinite (pivot {pivot} = {value:.3e})")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input files.
    Input,
    /// Structurally valid input outside a model's domain.
    Domain,
    /// An iterative method hit its cap.
    NonConvergence,
    /// Filesystem failure.
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            UnknownLink(_) | UnknownRoute(_) | NonPositiveCost(..) | EmptyRoute(_)
            | RepeatedLink { .. } | DuplicateRoute(..) | NoRoutes | Dataset(_) | Schema(_) => {
                ErrorClass::Input
            }
            TooFewRoutes { .. }
            | DimensionMismatch { .. }
            | NonPositiveEntry { .. }
            | InvalidParameter(_)
            | InvalidUtility { .. }
            | DegeneratePair { .. }
            | DegenerateRoute { .. }
            | NotPositiveSemidefinite { .. }
            | EstimationFailed(_) => ErrorClass::Domain,
            NonConvergence { .. } => ErrorClass::NonConvergence,
            Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
