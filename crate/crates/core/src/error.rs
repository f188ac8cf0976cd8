use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped by what went wrong rather than where: the CLI maps
/// [`Error::category`] onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("duplicate subject id `{0}` in survival data")]
    DuplicateId(String),

    #[error("subject `{subject}`: negative event time {time}")]
    NegativeTime { subject: String, time: f64 },

    #[error("longitudinal subjects without a survival record: {0:?}")]
    Orphan(Vec<String>),

    #[error("measurements recorded after the event time for subjects: {0:?}")]
    TemporalConsistency(Vec<String>),

    #[error("formula error at byte {offset}: {message}")]
    Formula { offset: usize, message: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("spline error: {0}")]
    Spline(String),

    #[error("derivative of the linear predictor with respect to `{0}` is identically zero")]
    ZeroDerivative(String),

    #[error("fixed-effects design is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("optimizer did not converge after {iterations} iterations (objective {objective}, gradient norm {gradient_norm})")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        gradient_norm: f64,
        best: Vec<f64>,
    },

    #[error("monotone likelihood: coefficient `{covariate}` diverged to {value}")]
    MonotoneLikelihood { covariate: String, value: f64 },

    #[error("no events observed")]
    NoEvents,

    #[error("too few events: {events} events for {covariates} covariates")]
    InsufficientEvents { events: usize, covariates: usize },

    #[error("invalid model comparison: {0}")]
    InvalidComparison(String),

    #[error("quadrature overflow at t = {t} (linear predictor {linear_predictor})")]
    QuadratureOverflow { t: f64, linear_predictor: f64 },

    #[error("root finding failed for subject {subject}: {message}")]
    RootFinding { subject: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Data,
    Numerical,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::RankDeficient { .. }
            | Error::NonConvergence { .. }
            | Error::MonotoneLikelihood { .. }
            | Error::QuadratureOverflow { .. }
            | Error::RootFinding { .. }
            | Error::Numerical(_)
            | Error::NonFinite(_) => Category::Numerical,
            _ => Category::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
