use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("density undefined: component {0} has zero standard deviation")]
    DegenerateComponent(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("direction is not a unit vector (norm {0})")]
    NonUnitDirection(f64),
    #[error("singular scale matrix in component {0}")]
    SingularScale(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite function value at evaluation point {0}")]
    NonFinite(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("enumeration would exceed {limit} trajectories")]
    TooManyTrajectories { limit: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed points file at row {row}, column {column}: {message}")]
    MalformedPoints {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
