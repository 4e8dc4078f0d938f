use thiserror::Error;

/// Errors produced by the tree, ensemble, policy, environment and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid feature value: {0}")]
    InvalidFeature(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("undefined leaf variance: leaf {leaf} of tree {tree} has count {count} < 2")]
    UndefinedLeafVariance { tree: usize, leaf: usize, count: u64 },

    #[error("leaf {0} does not exist")]
    UnknownLeaf(usize),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty candidate set")]
    EmptyChoice,

    #[error("no feasible path from vertex {origin} to vertex {dest}")]
    Unreachable { origin: usize, dest: usize },

    #[error("negative edge weight {weight} on edge {edge}")]
    NegativeWeight { edge: usize, weight: f64 },

    #[error("horizon exceeds dataset: round {round} but only {rows} rows")]
    HorizonExceedsDataset { round: usize, rows: usize },

    #[error("arm must be played twice before its score is defined (played {0})")]
    ArmPlayedTooFew(u64),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Validation(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
