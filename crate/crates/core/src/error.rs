use thiserror::Error;

use crate::ledger::{ChainId, TransferKey};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transfer not found: {0}")]
    NotFound(TransferKey),

    #[error("chain {0} is not registered")]
    InvalidChain(ChainId),

    #[error("invalid transfer {key}: {reason}")]
    InvalidTransfer { key: TransferKey, reason: String },

    #[error("invalid range: {0}")]
    Range(String),

    #[error("no price coverage: {0}")]
    OutOfRange(String),

    #[error("missing price series {base}/{quote}")]
    MissingSeries { base: String, quote: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "not_found",
            Error::InvalidChain(_) => "invalid_chain",
            Error::InvalidTransfer { .. } => "invalid_transfer",
            Error::Range(_) => "range",
            Error::OutOfRange(_) => "out_of_range",
            Error::MissingSeries { .. } => "missing_series",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::ProtocolViolation(_) => "protocol_violation",
            Error::Inconsistent(_) => "inconsistent",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
