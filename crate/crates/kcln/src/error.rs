//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by loading, parsing, training and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A malformed line in a TSV or config file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Advice-rule syntax error with source position.
    #[error("advice syntax error at {line}:{col}: {msg}")]
    RuleSyntax { line: usize, col: usize, msg: String },

    /// An edge or rule refers to an entity, relation, feature or label that
    /// does not exist in the loaded graph.
    #[error("unresolved reference: {0}")]
    Referential(String),

    /// Invalid configuration value (bad range, unknown key, missing field).
    #[error("invalid config: {0}")]
    Config(String),

    /// Non-finite value encountered during training or inference.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Rule validation produced diagnostics; the offending names are listed.
    #[error("advice does not resolve against the graph:\n{}", .0.join("\n"))]
    Diagnostics(Vec<String>),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code contract: 1 for user/config/data errors, 2 for
    /// numeric or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
