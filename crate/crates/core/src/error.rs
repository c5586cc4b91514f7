use thiserror::Error;

/// Errors produced by model construction, inference, learning and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("time index {t} is outside the emission window [{max_lag}, {last}]")]
    OutOfWindow { t: usize, max_lag: usize, last: usize },

    #[error("dataset has {rows} rows but the model needs more than max lag {max_lag}")]
    EmptyWindow { rows: usize, max_lag: usize },

    #[error("viterbi decoding failed: every state has zero probability at t = {t}")]
    DecodingFailure { t: usize },

    #[error("non-finite value in weighted regression for state {state}, variable {var}")]
    Solver { state: usize, var: usize },

    #[error("correlation undefined: series is constant")]
    ConstantSeries,

    #[error("series of length {len} is too short for lag {k}")]
    SeriesTooShort { len: usize, k: usize },

    #[error("singular Yule-Walker system at order {k}")]
    SingularToeplitz { k: usize },

    #[error("unit root in state {state}, variable {var}: AR weights sum to {sum}")]
    UnitRoot { state: usize, var: usize, sum: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
