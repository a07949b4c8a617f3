use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite state in {process} at step {step}")]
    NonFinite { process: &'static str, step: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("matrix exponential overflow (1-norm {norm:.3e})")]
    Overflow { norm: f64 },

    #[error("finite difference dominated by roundoff: {0}")]
    Roundoff(String),

    #[error("grid step h = {h:.3e} too coarse, need h <= {max:.3e}")]
    CoarseGrid { h: f64, max: f64 },

    #[error("resolvent solve failed: {0}")]
    Resolvent(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
