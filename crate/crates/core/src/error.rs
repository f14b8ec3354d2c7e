use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the admissible set (negative jump rate, bad length, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed profile data or file contents.
    #[error("format error: {0}")]
    Format(String),
    /// An iterative solver did not reach its tolerance.
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    /// The eigenvalue under study is not simple, so first-order formulas do not apply.
    #[error("degenerate eigenvalue: {0}")]
    Degenerate(String),
    /// det M stayed below the boundary threshold on a contour after all dilations.
    #[error("unresolvable boundary: zero of det M on or near the contour")]
    UnresolvableBoundary,
    /// Two routes that must agree did not.
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
