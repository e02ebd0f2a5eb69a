use thiserror::Error;

/// Errors produced by the allocation math, the design state machines and
/// the simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("arm with zero subjects has positive standard deviation")]
    InfiniteVariance,
    #[error("both standard deviations are zero; competitive ratio undefined")]
    ZeroBenchmark,
    #[error("sample variance needs at least 2 observations, got {got}")]
    TooFewObservations { got: usize },
    #[error("empty arm: {0}")]
    EmptyArm(&'static str),
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("wrong stage: {0}")]
    WrongStage(String),
    #[error("observation count mismatch: expected ({expected_t1}, {expected_t0}), got ({got_t1}, {got_t0})")]
    CountMismatch {
        expected_t1: u64,
        expected_t0: u64,
        got_t1: u64,
        got_t0: u64,
    },
    #[error("experiment incomplete: {assigned} of {horizon} subjects observed")]
    IncompleteExperiment { assigned: u64, horizon: u64 },
    #[error("M must be at least {min}, got {got}")]
    BadM { min: usize, got: usize },
    #[error("T = {t} is below the required threshold {threshold}")]
    TooSmallT { t: u64, threshold: f64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("zero variance: kurtosis undefined")]
    ZeroVariance,
    #[error("KL divergence is infinite: support mismatch")]
    InfiniteKl,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("designs disagree on the horizon: {0} vs {1}")]
    MismatchedHorizon(u64, u64),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
