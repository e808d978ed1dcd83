//! Error type shared across the crate.
//!
//! Errors fall into two coarse classes that the CLI maps onto exit codes:
//! input problems (bad parameters, malformed files, inconsistent models) and
//! numeric or capability problems (an iteration failed to converge, or the
//! requested computation is outside what an algorithm supports).

use std::path::PathBuf;

/// Everything fallible in this crate returns this error.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structured input file failed validation.
    #[error("parse error in {path} (line {line}): {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A model is structurally invalid (non-stochastic rows, reducible
    /// chains, missing increment distributions, and the like).
    #[error("model error: {0}")]
    Model(String),

    /// An iterative method failed to reach its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The request is valid mathematics but outside this implementation
    /// (dimension too high, a family without a density, etc.).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI uses for this error: 1 for input problems,
    /// 2 for numeric or capability problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Parse { .. } | Error::Model(_) | Error::Io(_) => 1,
            Error::Numeric(_) | Error::Capability(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
