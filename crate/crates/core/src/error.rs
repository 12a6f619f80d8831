use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("connectivity {connectivity} is infeasible for {n_nodes} nodes: a connected graph needs at least {min_connectivity}")]
    InfeasibleConnectivity {
        n_nodes: usize,
        connectivity: f64,
        min_connectivity: f64,
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("node {node} out of range for a graph of {n_nodes} nodes")]
    NodeOutOfRange { node: usize, n_nodes: usize },

    #[error("nodes {from} and {to} are not neighbors")]
    NotNeighbors { from: usize, to: usize },

    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),

    #[error("graph is not connected")]
    Disconnected,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },

    #[error("{0} is not finite")]
    NonFinite(&'static str),

    #[error("linear system is singular or not positive definite")]
    Singular,

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
