//! Error types shared across the harness.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("domain not found: {0}")]
    DomainNotFound(String),

    #[error("unknown slot `{slot}` for domain `{domain}`")]
    UnknownSlot { domain: String, slot: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("goal generation failed for domain `{domain}`: {reason}")]
    Generation { domain: String, reason: String },

    #[error("corpus has no training sessions")]
    EmptyCorpus,

    #[error("import error at line {line}, column {column} (byte offset {offset}): {message}")]
    Import {
        message: String,
        line: usize,
        column: usize,
        offset: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("input of {len} tokens exceeds max context {max}")]
    OverLength { len: usize, max: usize },

    #[error("loss is not finite at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },

    #[error("no unmasked positions for language-model loss")]
    AllMasked,

    #[error("checkpoint/vocabulary mismatch: checkpoint hash {expected}, vocabulary hash {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
