use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate out of domain: {0}")]
    Domain(String),
    #[error("invalid tile: {0}")]
    Tile(String),
    #[error("point outside tile {tile}")]
    OutOfTile { tile: String },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("scene line {line}: {reason}")]
    SceneParse { line: usize, reason: String },
    #[error("image: {0}")]
    Image(String),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autograd(#[from] cartogan_autograd::AutogradError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
