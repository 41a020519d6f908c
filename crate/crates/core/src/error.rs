use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty spec series")]
    EmptySpecSeries,

    #[error("invalid battery spec at slot {slot}: {reason}")]
    InvalidSpec { slot: usize, reason: String },

    #[error("nominal power out of range at slot {slot}: p0 = {value} not in [0, {p_max}]")]
    NominalPowerOutOfRange { slot: usize, value: f64, p_max: f64 },

    #[error("invalid TCL parameters: {0}")]
    InvalidTcl(String),

    #[error("invalid task {index}: {reason}")]
    InvalidTask { index: usize, reason: String },

    #[error("task exceeds horizon: task {index} has deadline {deadline} > horizon {horizon}")]
    TaskExceedsHorizon {
        index: usize,
        deadline: usize,
        horizon: usize,
    },

    #[error("dissipation mismatch: cannot merge batteries with alpha {first} and {other}")]
    DissipationMismatch { first: f64, other: f64 },

    #[error("horizon mismatch: {0}")]
    LengthMismatch(String),

    #[error("envelope too tight for any V: numerator {numerator} < 0")]
    EnvelopeTooTight { numerator: f64 },

    #[error("price bound must be positive, got {0}")]
    NonPositivePriceBound(f64),

    #[error("initial SoC outside guaranteed envelope: {soc0} not in [{lower}, {upper}]")]
    InitialSocOutsideEnvelope { soc0: f64, lower: f64, upper: f64 },

    #[error("controller requires alpha = 1, slot {slot} has alpha = {alpha}")]
    UnsupportedDissipation { slot: usize, alpha: f64 },

    #[error("grid misalignment: {0}")]
    GridMisalignment(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty trace")]
    EmptyTrace,

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
