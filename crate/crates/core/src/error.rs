use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty matrix")]
    Empty,

    #[error("non-finite entries in {0}")]
    NonFiniteMatrix(&'static str),

    #[error("repeated eigenvalues: minimum pairwise gap {gap:e} is below tolerance {tol:e}")]
    RepeatedEigenvalues { gap: f64, tol: f64 },

    #[error("eigenvector basis is numerically singular")]
    SingularEigenbasis,

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is indefinite: smallest eigenvalue {0:e}")]
    Indefinite(f64),

    #[error("non-finite state on path {path} at t = {time}")]
    NonFinite { path: usize, time: f64 },

    #[error("model is not diagnosed unidentifiable: {0}")]
    NotUnidentifiable(String),

    #[error("commutativity violated: {0}")]
    NotCommuting(String),

    #[error("optimizer diverged: {0}")]
    Diverged(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
