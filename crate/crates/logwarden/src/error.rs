//! Crate-wide error taxonomy.
//!
//! Parse errors are recoverable: the ingest loop reports them per line and
//! keeps going. Everything else aborts the operation that raised it.

use std::io;

use thiserror::Error;

use crate::provgraph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A JSON-lines row that could not be turned into a raw log. Carries the
    /// 1-based line number of the offending row.
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },

    /// A node handle that does not exist in the graph it was used against.
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    /// A configuration value outside its legal range, named by field.
    #[error("invalid configuration: {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// Non-finite numeric input to a transform, naming the offending column.
    #[error("non-finite value in feature column {column}")]
    NonFinite { column: usize },

    /// A model file whose bytes do not follow the documented container layout.
    #[error("model file: {0}")]
    ModelFormat(String),

    /// Vector or matrix sizes that do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation { field, reason: reason.into() }
    }
}
