//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DseError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown domain tag `{found}` (configured domains: {expected_p}, {expected_q})")]
    UnknownDomain {
        found: String,
        expected_p: String,
        expected_q: String,
    },

    #[error("rating {0} outside [1.0, 5.0]")]
    InvalidRating(f64),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty vocabulary (min count {min_count} dropped every word)")]
    EmptyVocabulary { min_count: u64 },

    #[error("vocabulary too small for negative sampling (need at least 2 words)")]
    VocabularyTooSmall,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("word `{0}` not in vocabulary")]
    UnknownWord(String),

    #[error("word id {0} out of range")]
    UnknownWordId(usize),

    #[error("bad magic or unsupported model format version")]
    ModelVersion,

    #[error("model file truncated")]
    ModelTruncated,

    #[error("model file checksum mismatch")]
    ModelChecksum,

    #[error("training set contains a single class")]
    SingleClass,

    #[error("class `{class}` has {have} examples, need at least {need}")]
    TooFewExamples {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("non-finite gradient encountered ({context})")]
    NonFiniteGradient { context: String },

    #[error("lexicon line {line}: label `{label}` is not `positive` or `negative`")]
    BadLexiconLabel { line: usize, label: String },
}

pub type Result<T> = std::result::Result<T, DseError>;

impl DseError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DseError::Io {
            path: path.into(),
            source,
        }
    }
}
