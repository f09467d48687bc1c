use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested check does not apply to the given parameters
    /// (for example the subordination check at `a = 0`).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("descent collapsed to the trivial attractor (norm {norm:.3e} below floor {floor:.3e}) after {iterations} iterations")]
    TrivialAttractor { norm: f64, floor: f64, iterations: usize },

    #[error("mountain-pass geometry lost: path maximum {max_energy:.6e} fell below barrier {barrier:.6e}")]
    GeometryLost { max_energy: f64, barrier: f64 },

    #[error("no convergence after {iterations} iterations (stationarity {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("search failed: {0}")]
    SearchFailed(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
