use std::io;

use thiserror::Error;

/// Process exit codes of the `sim` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const INVARIANT: i32 = 2;
    pub const RESOURCE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("resource ceiling: {0}")]
    Resource(String),
    #[error("invariant failure: {0}")]
    Invariant(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => exit::CONFIG,
            HarnessError::Resource(_) => exit::RESOURCE,
            HarnessError::Invariant(_) => exit::INVARIANT,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<torus_entropy::Error> for HarnessError {
    fn from(e: torus_entropy::Error) -> Self {
        use torus_entropy::Error as E;
        match e {
            E::CapExceeded { .. } => HarnessError::Resource(e.to_string()),
            E::NotUnitary { .. } | E::InvariantViolation(_) | E::Fit(_) => {
                HarnessError::Invariant(e.to_string())
            }
            other => HarnessError::Config(other.to_string()),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
