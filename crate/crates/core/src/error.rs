use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: String },

    #[error("duplicate post id {0:?}")]
    DuplicateId(String),

    #[error("duplicate rule ({community}, {rule_index})")]
    DuplicateRule { community: String, rule_index: u64 },

    #[error("cannot balance single-class data")]
    SingleClass,

    #[error("class {class} has {count} members, fewer than k = {k}")]
    ClassTooSmall { class: bool, count: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("embedding transport failure: {0}")]
    Transport(String),

    #[error("embedding service returned status {status}: {body}")]
    Status { status: u16, body: String },

    #[error("embedding service response invalid: {0}")]
    BadResponse(String),

    #[error("batch element {index} failed: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("not a CRCM model file")]
    NotModelFile,

    #[error("unsupported model format {0:?}")]
    UnsupportedFormat(String),

    #[error("model dimension {model} does not match provider dimension {provider}")]
    ModelDimension { model: usize, provider: usize },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("degenerate zero-variance difference")]
    DegenerateVariance,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
