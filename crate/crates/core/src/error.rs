use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input data: {0}")]
    Data(String),

    #[error("training diverged after {retries} retries: {reason}")]
    Diverged { retries: usize, reason: String },

    #[error("sampler failure: acceptance rate {acceptance_rate:.3} after warmup (step size {step_size:.3e})")]
    SamplerFailure { acceptance_rate: f64, step_size: f64 },

    #[error("cholesky factorization failed with jitter up to {max_jitter:e}")]
    Cholesky { max_jitter: f64 },

    #[error("too few ensemble members survived: {survived} of {requested}")]
    EnsembleCollapsed { survived: usize, requested: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
