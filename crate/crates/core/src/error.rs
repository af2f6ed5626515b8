use thiserror::Error;

use crate::parse::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("no sample point satisfying the domain guards found after {attempts} attempts")]
    SamplingFailed { attempts: usize },

    #[error("{function} argument {re}{im:+}i lies on the branch cut")]
    BranchCutViolation {
        function: &'static str,
        re: f64,
        im: f64,
    },

    #[error("acos argument {value} is outside (-1, 1)")]
    DomainViolation { value: f64 },

    #[error("jet of order {have} cannot supply derivatives of order {need}")]
    OrderTooLow { have: usize, need: usize },

    #[error("metric determinant is identically zero")]
    MetricSingular,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("variable x{index} is outside the chart of dimension {dim}")]
    VariableOutOfRange { index: u32, dim: usize },

    #[error("missing partial derivative {0}")]
    MissingPartial(String),

    #[error("expression budget of {limit} term operations exceeded")]
    ExpressionBudgetExceeded { limit: u64 },

    #[error("dualization needs an even chart dimension, got {0}")]
    OddDimension(usize),

    #[error("function is not holomorphic: it references {0}")]
    NonHolomorphicInput(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownId(String),

    #[error("division by an expression that is identically zero")]
    DivisionByZero,

    #[error("catalog file {file}: {message}")]
    Catalog { file: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
