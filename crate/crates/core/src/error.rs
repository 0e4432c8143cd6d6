use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("only {constrained} constrained degrees of freedom, rigid-body modes remain (need at least 3)")]
    MissingDirichlet { constrained: usize },

    #[error("stiffness matrix is not positive definite (curvature {curvature:e} at CG iteration {iteration})")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("conjugate gradients did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("rejection sampling stalled: {accepted} accepted out of {attempts} draws")]
    RejectionStalled { accepted: usize, attempts: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("quadrature grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("optimization aborted at iteration {iteration}: {source}")]
    Aborted { iteration: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
