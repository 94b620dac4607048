use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A memory state or bias outside the model's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested current outside what the device can carry.
    #[error("target current {target:e} A violates {bound} bound {limit:e} A")]
    Range {
        target: f64,
        bound: &'static str,
        limit: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input voltage {value} V outside legal range [{lo}, {hi}] V")]
    InputRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("training diverged at epoch {epoch} (loss is not finite); try a lower learning rate")]
    Diverged { epoch: usize },

    #[error("weight matrix for layer {layer} is all zeros, cannot derive a current scale")]
    DegenerateScale { layer: usize },

    #[error("cannot program array {array} cell (row {row}, col {col}) to {target:e} A: {reason}")]
    Programming {
        array: usize,
        row: usize,
        col: usize,
        target: f64,
        reason: String,
    },

    #[error("missing artifact {}: run `{command}` first", path.display())]
    MissingArtifact { path: PathBuf, command: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
