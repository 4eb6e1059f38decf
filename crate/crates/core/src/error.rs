use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("detection answer must contain at least one box")]
    EmptyAnswer,

    #[error("box {0:?} collapses at {1} decimals and cannot be written in the answer grammar")]
    UnrepresentableBox([f64; 4], usize),

    #[error("no integer found in count answer {0:?}")]
    UnparseableCount(String),

    #[error("no yes/no log-probabilities or recognizable yes/no text in {0:?}")]
    UnparseableSbir(String),

    #[error("mask has no foreground pixels")]
    EmptyMask,

    #[error("no strokes survived sketch generation")]
    EmptySketch,

    #[error("empty sketch pool for class {0}")]
    EmptyPool(u32),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient supply: {0}")]
    InsufficientSupply(String),

    #[error("missing score matrix entries: {0:?}")]
    MissingScores(Vec<(String, String)>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
