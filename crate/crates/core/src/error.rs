use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("non-finite value for {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("truncated point record at byte offset {offset}")]
    TruncatedRecord { offset: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("could not place box {index} without overlap after {attempts} attempts")]
    Placement { index: usize, attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("average precision is undefined without ground truth")]
    NoGroundTruth,

    #[error("missing loss term `{0}`")]
    MissingTerm(&'static str),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("frame sets differ: {0}")]
    FrameMismatch(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
