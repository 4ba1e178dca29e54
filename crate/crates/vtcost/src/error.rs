use thiserror::Error;

/// Errors produced by graph construction, validation, file IO and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node `{node}`: {message}")]
    InvalidNode { node: String, message: String },

    #[error("edge {producer} -> {consumer}: {message}")]
    InvalidEdge {
        producer: String,
        consumer: String,
        message: String,
    },

    #[error("cycle detected involving node `{0}`")]
    Cycle(String),

    #[error("edge references missing node `{0}`")]
    DanglingEdge(String),

    #[error("unsupported variant `{0}`")]
    UnsupportedVariant(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown layer kind for `{node}`: {kind}")]
    UnknownKind { node: String, kind: String },

    #[error("layer `{0}` cannot be mapped to the accelerator")]
    Unmappable(String),

    #[error("prune config invalid: {0}")]
    InvalidPruneConfig(String),

    #[error("calibration underdetermined: missing {0}")]
    Underdetermined(String),

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("metric mismatch: frontier uses {frontier}, trace uses {trace}")]
    MetricMismatch { frontier: String, trace: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
