use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("shape mismatch for `{name}`: expected {expected:?}, got {got:?}")]
    Shape {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("vertex {vertex} out of range for graph with {n_vertices} vertices")]
    Index { vertex: usize, n_vertices: usize },

    #[error("instance with {n_vertices} vertices exceeds the exhaustive-search cap of {cap}")]
    Capacity { n_vertices: usize, cap: usize },

    #[error("approximation ratio undefined for reference cut {0}")]
    UndefinedRatio(i64),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("replay buffer holds {have} segments, {need} needed")]
    NotReady { have: usize, need: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
