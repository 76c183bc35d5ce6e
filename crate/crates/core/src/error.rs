use thiserror::Error;

/// Errors produced by the library.
#[derive(Error, Debug)]
pub enum OutminError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate candidate: {0}")]
    Degenerate(String),

    #[error("power iteration did not converge after {iters} iterations (last estimate {last})")]
    Convergence { iters: usize, last: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, OutminError>;
