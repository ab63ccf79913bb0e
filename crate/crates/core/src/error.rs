use thiserror::Error;

/// Errors raised by the group arithmetic, numerics, estimators and CLI layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("logarithm undefined on the branch cut: theta = {theta}")]
    LogBranch { theta: f64 },

    #[error("non-finite value produced at t = {t}")]
    Divergence { t: f64 },

    #[error("non-finite map output during finite differencing (column {column})")]
    NonFiniteJacobian { column: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix of size {size} exceeds eigensolver limit of {max}")]
    TooLarge { size: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular")]
    Singular,

    #[error("QR iteration failed to converge")]
    NoConvergence,

    #[error("landmark geometry is ill-conditioned: cond(I I^T) = {condition:e} exceeds {bound:e}")]
    Geometry { condition: f64, bound: f64 },

    #[error("invalid landmark set: {0}")]
    Landmarks(String),

    #[error("degenerate reference: u_r = 0 leaves the tracking controller undefined")]
    DegenerateReference,

    #[error("invalid gain `{name}`: must be > 0 (got {value})")]
    Gain { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation aborted at t = {t}: {reason}")]
    Aborted { t: f64, reason: String },

    #[error("invalid config field `{field}`: {constraint}")]
    Config { field: String, constraint: String },

    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
