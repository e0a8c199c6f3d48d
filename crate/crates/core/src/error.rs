use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("linear program failed: {0}")]
    Solver(#[from] crate::simplex::LpError),

    #[error("integration unstable at t = {t:.6e} s (|theta| = {theta:.3e} rad exceeds pi/2); try a smaller dt than {dt:.3e} s")]
    Unstable { t: f64, theta: f64, dt: f64 },

    /// The pointer never settled or came to rest inside the readout dead band.
    #[error("inconclusive readout: {0}")]
    Inconclusive(String),

    #[error("trial {trial_id} failed in stage {stage}: {source}")]
    Trial {
        trial_id: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through trial wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
