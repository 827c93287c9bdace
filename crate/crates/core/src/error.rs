use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported QAM order {0}: expected one of 4, 16, 64, 256")]
    UnsupportedOrder(usize),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("underdetermined system: N={n} receive dimensions < K={k} transmit dimensions")]
    Underdetermined { n: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("ML enumeration of {candidates} candidates exceeds the budget of {budget}")]
    BudgetExceeded { candidates: u128, budget: u64 },

    #[error("singular value decomposition failed: {0}")]
    Decomposition(String),

    #[error("detector {detector} failed at snr {snr_db} dB, seed path {path:?}: {source}")]
    SweepAborted {
        detector: String,
        snr_db: f64,
        path: Vec<u32>,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Spec(#[from] crate::experiment::SpecError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
