use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension d = {d} (need d >= {min})")]
    UnsupportedDimension { d: usize, min: usize },

    #[error("integer overflow computing {what}")]
    Overflow { what: String },

    #[error("degree {k} out of range (basis holds degrees 0..={max})")]
    DegreeOutOfRange { k: usize, max: usize },

    #[error("argument {value} outside [{lo}, {hi}]")]
    ArgumentOutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("quadrature exact to degree {have}, need at least {need}")]
    InsufficientQuadrature { have: usize, need: usize },

    #[error("non-finite function value {value} at node x = {node}")]
    NonFinite { node: f64, value: f64 },

    #[error("row {row} has norm {norm}, expected sqrt(d) = {expected}")]
    RowNorm { row: usize, norm: f64, expected: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("refusing to allocate {required} rows (cap is {cap})")]
    MemoryCap { required: usize, cap: usize },

    #[error("SGD diverged at iteration {iteration}: train error {error} exceeds 1e3 x initial {initial}")]
    Diverged { iteration: usize, error: f64, initial: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("trial {trial} failed [{config}]: {source}")]
    Trial { trial: usize, config: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    /// Errors caused by the user's configuration rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        if let Error::Trial { source, .. } = self {
            return source.is_config_error();
        }
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::UnsupportedDimension { .. }
                | Error::InvalidInput(_)
                | Error::MemoryCap { .. }
                | Error::Io(_)
        )
    }
}
