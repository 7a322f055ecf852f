use thiserror::Error;

use crate::grid::{Axis, Side};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-facing configuration (grid, decomposition, run settings).
    #[error("{0}")]
    Config(String),

    #[error("spectral interval error: {0}")]
    SpectralInterval(String),

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("dense oracle needs {unknowns} unknowns, cap is {cap}")]
    OracleTooLarge { unknowns: usize, cap: usize },

    #[error("eigenvalue {re} + {im}i of a 1D factor is not real")]
    ComplexEigenvalue { re: f64, im: f64 },

    #[error(transparent)]
    Comm(#[from] CommError),

    #[error("preconditioner failed: {0}")]
    Preconditioner(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CommError {
    #[error("rank {rank}: timed out waiting for {what}")]
    Timeout { rank: usize, what: String },

    #[error("rank {rank}: peer {peer} disconnected")]
    Disconnected { rank: usize, peer: usize },

    #[error("rank {rank}: {detail}")]
    Contract { rank: usize, detail: String },

    #[error("rank {rank}: halo {axis}{side} expected from rank {peer}, got {got}")]
    UnexpectedMessage {
        rank: usize,
        peer: usize,
        axis: Axis,
        side: Side,
        got: String,
    },

    #[error("communication is not permitted on this communicator ({0})")]
    Forbidden(&'static str),
}
