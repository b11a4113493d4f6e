use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate radius {radius} (minimum {minimum})")]
    DegenerateRadius { radius: f64, minimum: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fields live on different grids")]
    DomainMismatch,

    #[error("operator has no unknowns (empty support)")]
    EmptyOperator,

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (relative residuals {residuals:?})")]
    EigenNonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("phase {phase} is identically zero")]
    DegeneratePhase { phase: usize },

    #[error("supports of fields {first} and {second} overlap (normalized product {overlap:.3e})")]
    OverlappingSupports {
        first: usize,
        second: usize,
        overlap: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of an iterative solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SolverNonConvergence { .. } | Error::EigenNonConvergence { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
