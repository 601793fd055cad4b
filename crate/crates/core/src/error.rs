use thiserror::Error;

/// Errors surfaced by the library. Shape problems carry the offending
/// operation name and the shapes involved so callers can see exactly
/// which op rejected what.
#[derive(Debug, Error)]
pub enum GradError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("tensor construction: shape {shape:?} implies {expected} elements, got {actual}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("tensor construction: non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("{op}: stddev must be strictly positive (min entry {min})")]
    NonPositiveStddev { op: &'static str, min: f64 },

    #[error("backward: root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("{context}: sequence length mismatch: {detail}")]
    LengthMismatch {
        context: &'static str,
        detail: String,
    },

    #[error("{context}: index {index} out of range (len {len})")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown environment '{0}'")]
    UnknownEnv(String),

    #[error("action out of bounds: component {index} = {value}")]
    ActionOutOfBounds { index: usize, value: f64 },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("episode chunk too short: need at least {need}, got {got}")]
    ChunkTooShort { need: usize, got: usize },

    #[error("checkpoint `{path}`: {detail}")]
    Checkpoint { path: String, detail: String },

    #[error("io error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GradError>;
