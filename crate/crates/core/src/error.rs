use thiserror::Error;

/// Errors surfaced by the public API.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("empty sequence passed to {0}")]
    EmptySequence(&'static str),

    #[error("NaN gradient for parameter `{0}`")]
    NanGradient(String),

    #[error("loss is not deterministic: two forward passes gave {0} and {1}")]
    NonDeterministicLoss(f64, f64),

    #[error("corpus error in instance `{id}`: {msg}")]
    Corpus { id: String, msg: String },

    #[error("empty retrieval pool (target is always excluded)")]
    EmptyPool,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
