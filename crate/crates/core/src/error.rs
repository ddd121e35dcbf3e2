use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported {what} {value} (supported range {min}..={max})")]
    Unsupported {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("interpolation nodes must be distinct")]
    DuplicateNodes,

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("GMRES did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("GMRES breakdown at iteration {iteration}: inconsistent or singular Krylov system")]
    Breakdown { iteration: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
