use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate observation for worker {worker_id} in year {year}")]
    DuplicateKey { worker_id: String, year: i32 },

    #[error("empty result: {0}")]
    EmptyResult(String),

    #[error("design column {column} is collinear with earlier columns")]
    Collinear { column: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("perfect or quasi-complete separation: {0}")]
    Separation(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("insufficient groups: {0}")]
    InsufficientGroups(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("outcome has zero variance: {0}")]
    ZeroVariance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
