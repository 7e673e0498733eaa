use std::path::PathBuf;

use thiserror::Error;

use crate::node::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid coefficient {value} at {node}: must lie in [-1, 1]")]
    InvalidCoefficient { node: NodeId, value: f64 },

    #[error("depth error: requested depth {requested} exceeds available depth {available}")]
    Depth { requested: u32, available: u32 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("ingestion error in predicate '{predicate}': {message}")]
    Predicate { predicate: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used as an error prefix by front-ends.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidMeasure(_) => "invalid-measure",
            Error::InvalidCoefficient { .. } => "invalid-coefficient",
            Error::Depth { .. } => "depth",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Predicate { .. } => "ingest",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
