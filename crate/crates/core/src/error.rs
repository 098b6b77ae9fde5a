use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    // ingestion
    #[error("no element node could be recovered from the document")]
    EmptyDocument,

    #[error("schema error on line {line}: {message}")]
    Schema { line: usize, message: String },

    // tensors
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("segment {0} has no members")]
    EmptySegment(usize),

    #[error("dropout probability {0} outside [0, 1)")]
    BadProbability(f64),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    // features / training
    #[error("cannot fit a feature schema on an empty corpus")]
    EmptyCorpus,

    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("dataset must contain both labels")]
    SingleLabelDataset,

    // metrics
    #[error("labels are constant; no comparable pairs")]
    NoComparablePairs,

    #[error("both labels must be present")]
    SingleClass,

    #[error("result list for query {query:?} is shorter than {p}")]
    ShortList { query: String, p: usize },

    #[error("GSB counts are all zero")]
    EmptyCounts,

    // corpus
    #[error("bad template spec: {0}")]
    BadSpec(String),

    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios(Vec<f64>),

    // pipeline
    #[error("schema mismatch: checkpoint expects {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("blend weight {0} outside [0, 1]")]
    BadWeight(f64),

    #[error("metric sets differ: {0}")]
    MetricMismatch(String),

    #[error("invalid data: {0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SchemaMismatch { .. } | Error::Version { .. } => 4,
            Error::Config(_) | Error::BadWeight(_) | Error::BadRatios(_) | Error::BadSpec(_) => 2,
            _ => 3,
        }
    }
}
