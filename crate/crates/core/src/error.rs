use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A time step violates a stability guard.
    #[error("unstable time step: {0}")]
    Stability(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A phase trajectory does not cover a requested time.
    #[error("phase trajectory does not cover t = {t}")]
    Coverage { t: f64 },

    #[error("no statistically significant local minimum in scan")]
    NoMinimum,

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// CLI exit code: 1 for usage/config problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config { .. } | Error::Io(_) => 1,
            Error::Stability(_)
            | Error::Convergence(_)
            | Error::Coverage { .. }
            | Error::NoMinimum
            | Error::Numerical(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
