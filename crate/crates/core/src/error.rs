use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unknown family kind `{0}`")]
    UnknownKind(String),

    #[error("transform chain too deep ({depth} > {max})")]
    TransformDepth { depth: usize, max: usize },

    #[error("horizon {requested} exceeds the configured maximum {max}")]
    HorizonOverflow { requested: u64, max: u64 },

    #[error("analytic moments unavailable: {0}")]
    MomentsUnavailable(String),

    #[error("negative variance {value} at n = {n}")]
    NegativeVariance { n: u64, value: f64 },

    #[error("need at least {min} replications, got {got}")]
    InsufficientReplications { min: u64, got: u64 },

    #[error("tail function increases at t = {t}: {before} -> {after}")]
    NonmonotoneTail { t: f64, before: f64, after: f64 },

    #[error("negative value {value} observed at n = {n} for a family required to be non-negative")]
    NegativityDetected { n: u64, value: f64 },

    #[error("scaled mean {ratio} at n = {n} exceeds the band ceiling {ceiling}")]
    SupExceeded { n: u64, ratio: f64, ceiling: f64 },

    #[error("non-finite mean path value at n = {0}")]
    NonfiniteMean(u64),

    #[error("trajectory horizon {trajectory} shorter than index horizon {index}")]
    HorizonMismatch { trajectory: usize, index: usize },

    #[error("checkpoints must be strictly increasing and positive")]
    CheckpointUnsorted,

    #[error("conditioning event never occurred in {samples} samples")]
    EmptyCondition { samples: u64 },

    #[error("n = {n} outside the supported range 1..={max}")]
    NTooLarge { n: u64, max: u64 },

    #[error("quadrature tolerance {tolerance} not met (estimate {estimate} after {evaluations} evaluations)")]
    ToleranceNotMet {
        tolerance: f64,
        estimate: f64,
        evaluations: usize,
    },

    #[error("integrand is not finite at x = {0}")]
    NonFiniteIntegrand(f64),

    #[error("normalizer: {0}")]
    Normalizer(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
