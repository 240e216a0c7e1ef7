use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter combination the code does not support (wrong cylinder, bad grid, CFL).
    #[error("configuration error: {0}")]
    Config(String),

    /// A graph radius that is not strictly positive.
    #[error("domain error: graph radius {value} at node {node} is not positive")]
    Domain { node: usize, value: f64 },

    /// The explicit flow produced a non-positive radius.
    #[error("blow-up at tau = {tau}: radius {value} at node {node}")]
    BlowUp { tau: f64, node: usize, value: f64 },

    #[error("input error: {0}")]
    Input(String),

    /// An adaptive integrator could not make progress.
    #[error("stiffness: step size underflow at t = {t} (h = {h})")]
    Stiffness { t: f64, h: f64, last: Vec<f64> },

    #[error("solver error: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
