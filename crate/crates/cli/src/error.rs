use std::path::PathBuf;

use thiserror::Error;

/// Exit status for each failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NO_CONVERGENCE: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Library(#[from] kfgraph::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use kfgraph::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Library(e) => match e {
                E::InvalidParameter(_)
                | E::InvalidSpace(_)
                | E::InvalidAtom(_)
                | E::ArityMismatch { .. }
                | E::Config(_) => exit::CONFIG,
                E::MaxIterExceeded { .. } | E::DivergentKernel => exit::NO_CONVERGENCE,
                _ => exit::OTHER,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
