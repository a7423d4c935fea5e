use std::path::PathBuf;

use thiserror::Error;

use crate::state::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state {0}: {1}")]
    InvalidState(String, &'static str),

    #[error("degenerate finite-difference stencil at {cell} along axis {axis}")]
    DegenerateStencil { cell: Cell, axis: usize },

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("region does not intersect the valid field domain")]
    EmptyRegion,

    #[error("goal {goal} is unreachable from {from}")]
    UnreachableGoal { goal: Cell, from: Cell },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown scripted rule `{0}`")]
    UnknownRule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
