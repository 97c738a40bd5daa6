use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("layer chain mismatch between layers ({first}, {second}): {produced} outputs feed {expected} inputs")]
    LayerChain {
        first: usize,
        second: usize,
        produced: usize,
        expected: usize,
    },

    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("training diverged (non-finite values) at {stage} {step}")]
    Divergence { stage: &'static str, step: usize },

    #[error("insufficient minority rows: need at least {needed}, got {got}")]
    InsufficientMinority { needed: usize, got: usize },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("AUC undefined: truth contains a single class")]
    UndefinedAuc,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("load error at row {row}, column {column:?}: {reason}")]
    Load {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{dataset}/{method} repeat {repeat} fold {fold}: {source}")]
    Job {
        dataset: String,
        method: String,
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("leakage audit failed: {0}")]
    Leakage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
