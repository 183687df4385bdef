use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown label {value:?}")]
    UnknownLabel {
        path: String,
        line: usize,
        value: String,
    },

    #[error("{path}:{line}: duplicate example id {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },

    #[error("{0}: no examples")]
    NoExamples(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("lexicon: {0}")]
    Lexicon(String),

    #[error("model construction: {0}")]
    Shape(String),

    #[error("architecture fingerprint mismatch (bundle {bundle}, target {target}): {}", .mismatches.join("; "))]
    FingerprintMismatch {
        bundle: String,
        target: String,
        mismatches: Vec<String>,
    },

    #[error("checksum mismatch for {file}: manifest says {expected}, file hashes to {found}")]
    Checksum {
        file: String,
        expected: String,
        found: String,
    },

    #[error("bundle: {0}")]
    Bundle(String),

    #[error("non-finite training loss (seed {seed}, epoch {epoch}, batch {batch})")]
    NonFiniteLoss { seed: u64, epoch: usize, batch: usize },

    #[error("class {label} has zero training examples; merge or drop it before weighting")]
    ZeroClassCount { label: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("tokenizer: {0}")]
    Tokenizer(String),

    #[error("predictions: {0}")]
    Predictions(String),

    #[error("experiment: {0}")]
    Experiment(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
