use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A constraint evaluator returned NaN or infinite values.
    #[error("non-finite evaluation in {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    /// A barrier quantity that must stay strictly positive did not.
    #[error("iterate left the interior: {0}")]
    Interior(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
