use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{file}: {count} edge(s) reference unknown nodes, first: {examples}")]
    DanglingEdges {
        file: PathBuf,
        count: usize,
        examples: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node index {index} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged {
        epoch: usize,
        /// Parameters from the last epoch whose loss was finite.
        last_finite: Box<crate::model::Gdan>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
