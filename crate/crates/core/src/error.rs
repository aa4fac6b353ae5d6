use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    IndexOutOfRange { index: usize, num_nodes: usize },

    #[error("edge ({i}, {j}) has non-positive or non-finite weight {weight}")]
    NonPositiveWeight { i: usize, j: usize, weight: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("node {0} has zero degree; normalized operators require positive degrees")]
    ZeroDegree(usize),

    #[error("node {0} is isolated (zero diffusion mass)")]
    IsolatedNode(usize),

    #[error("non-finite value in node features at row {row}")]
    NonFiniteFeature { row: usize },

    #[error("dense materialization of {num_nodes} nodes exceeds cap {cap}")]
    TooLarge { num_nodes: usize, cap: usize },

    #[error("dense system is singular")]
    Singular,

    #[error("fixed-point iterate became non-finite at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("graph is bipartite; diffusion limit requires a connected, non-bipartite graph")]
    BipartiteGraph,

    #[error("graph is disconnected; diffusion limit requires a connected, non-bipartite graph")]
    Disconnected,

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("split '{0}' is empty")]
    EmptySplit(String),

    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(String),

    #[error("adjoint iteration diverged (residual {first} -> {last})")]
    AdjointNoConvergence { first: f64, last: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),

    #[error("graph still disconnected after {0} generation attempts")]
    DisconnectedAfterRetries(usize),

    #[error("class {class} has {count} nodes, too few to stratify into {splits} splits")]
    ClassTooSmall {
        class: usize,
        count: usize,
        splits: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
