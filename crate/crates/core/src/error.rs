use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid material: {0}")]
    Material(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("element {element} is inverted or degenerate (det J = {det_j:e})")]
    InvertedElement { element: usize, det_j: f64 },

    #[error("invalid network: {0}")]
    Network(String),

    #[error("boundary condition error: {0}")]
    Boundary(String),

    #[error("optimizer diverged: {0}")]
    Divergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
