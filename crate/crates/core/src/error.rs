use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the crate.
///
/// Variants are grouped loosely by the exit code the CLI maps them to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    // -- configuration / input (exit code 2) --
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown config key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("insufficient rows for covariance window: need at least {required} rows, got {actual}")]
    InsufficientRows { required: usize, actual: usize },

    #[error("unknown plot kind `{0}`")]
    UnknownPlotKind(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    // -- numerical failures (exit code 3) --
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-positive capitalization {value} at index {index}")]
    NonPositiveCap { index: usize, value: f64 },

    #[error("vector is not on the unit simplex: {0}")]
    NotOnSimplex(String),

    #[error("negative generator offset c = {0}")]
    NegativeOffset(f64),

    #[error("generating function value {0} is not positive")]
    GeneratorNotPositive(f64),

    #[error("covariance matrix is not symmetric (|s_ij - s_ji| = {0})")]
    AsymmetricCovariance(f64),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("market weight {weight} of stock {index} fell below the floor {floor} at step {step}")]
    WeightFloor {
        step: usize,
        index: usize,
        weight: f64,
        floor: f64,
    },

    #[error("empty time window [{start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },

    #[error("time grids differ between paths")]
    GridMismatch,

    #[error("time {0} outside the path's horizon")]
    TimeOutOfRange(f64),

    #[error("delta selection failed: {0}")]
    DeltaSelection(String),

    #[error("step sizes are not nested refinements: {0}")]
    RefinementIncompatible(String),

    #[error("path with seed {seed} failed: {source}")]
    PathFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    // -- hypothesis (exit code 4) --
    #[error("epsilon hypothesis unsatisfiable: {0}")]
    HypothesisUnsatisfiable(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::UnknownKey { .. }
            | Error::InvalidModel(_)
            | Error::InvalidParameter(_)
            | Error::Csv(_)
            | Error::InsufficientRows { .. }
            | Error::UnknownPlotKind(_)
            | Error::Io(_) => 2,
            Error::HypothesisUnsatisfiable(_) => 4,
            Error::PathFailed { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
