use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric positive semidefinite (min eigenvalue {0:.3e})")]
    Indefinite(f64),
    #[error("pair (A, C) is not observable (rank {rank} < {n})")]
    Unobservable { rank: usize, n: usize },
    #[error("pole placement failed: {0}")]
    Placement(String),
    #[error("unstable error dynamics (spectral radius {0:.6}); steady-state variance undefined")]
    Unstable(f64),
    #[error("power flow did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian in {0}")]
    Singular(&'static str),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("combined observability rank {rank} < {n}: no coordinated observer exists")]
    CombinedRank { rank: usize, n: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
