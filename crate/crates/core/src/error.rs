use thiserror::Error;

/// Errors raised by the simulation, exact-distribution and testing routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("newick parse error at byte {pos}: {msg}")]
    Newick { pos: usize, msg: String },

    #[error("precondition violated: {0}")]
    Domain(String),

    #[error("gene tree is not embedded in the species tree: {0}")]
    Embedding(String),

    #[error("sequence length mismatch ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("site count mismatch ({left} vs {right})")]
    SiteCountMismatch { left: usize, right: usize },

    #[error("distance estimate saturated: theta fraction {0} >= 3/4")]
    Saturated(f64),

    #[error("density does not integrate to one (mass {0})")]
    NotNormalized(f64),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
