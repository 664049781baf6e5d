use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate passage id {0:?}")]
    DuplicatePid(String),

    #[error("invalid passage {pid:?}: {reason}")]
    InvalidPassage { pid: String, reason: String },

    #[error("query {qid:?} references unknown passage {pid:?}")]
    DanglingGold { qid: String, pid: String },

    #[error("invalid query {qid:?}: {reason}")]
    InvalidQuery { qid: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("passage matrix is empty")]
    EmptyMatrix,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("centroid count {centroids} exceeds vector count {vectors}")]
    TooManyCentroids { centroids: usize, vectors: usize },

    #[error("bad index file: {0}")]
    BadIndex(String),

    #[error("bad matrix file: {0}")]
    BadMatrix(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("traces are missing query ids: {0:?}")]
    MissingTraces(Vec<String>),

    #[error("hop count mismatch: {0} vs {1}")]
    HopMismatch(usize, usize),

    #[error("take {take} exceeds retrieved depth {depth} at hop {hop}")]
    TakeTooLarge { hop: usize, take: usize, depth: usize },

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
