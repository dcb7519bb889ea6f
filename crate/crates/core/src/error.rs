use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("unit {unit}: treatment probability {value} is outside [0, 1]")]
    ProbabilityOutOfRange { unit: usize, value: f64 },

    #[error(
        "infeasible assignment: n1 = {n1} but {forced} unit(s) have p = 1 and only {positive} have p > 0"
    )]
    Infeasible {
        n1: usize,
        forced: usize,
        positive: usize,
    },

    #[error("enumeration guard exceeded: {count} support points (limit {limit})")]
    EnumerationGuard { count: u128, limit: u128 },

    #[error("weights sum to zero")]
    ZeroWeight,

    #[error("degenerate design: sum of pi_i (1 - pi_i) is zero")]
    DegenerateDesign,

    #[error("probabilities already uniform; nothing to orthogonalize")]
    AlreadyUniform,

    #[error("empty group: {n1} treated and {n0} control units")]
    EmptyGroup { n1: usize, n0: usize },

    #[error("first stage degenerate")]
    FirstStageDegenerate,

    #[error("monotonicity violated: defiers at units {0:?}")]
    MonotonicityViolated(Vec<usize>),

    /// `row` counts data rows from 1, so it is the unit index plus one.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures of the filesystem or stream layer, as opposed to
    /// problems with the data or configuration.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
