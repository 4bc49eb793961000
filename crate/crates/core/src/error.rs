use thiserror::Error;

/// Errors raised by mesh construction, assembly and the time loop.
#[derive(Debug, Error)]
pub enum HdgError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("unsupported quadrature order {0} (supported 1..=20)")]
    UnsupportedOrder(usize),
    #[error("unsupported polynomial degree {0} (supported 0..=3)")]
    UnsupportedDegree(usize),
    #[error("coefficient violation on element {element}: {detail}")]
    CoefficientViolation { element: usize, detail: String },
    #[error("singular local system on element {element}: {what}")]
    SingularLocal { element: usize, what: &'static str },
    #[error("singular global trace matrix: {0}")]
    SingularMatrix(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("factorization fingerprint {cached:#018x} does not match current coefficients {current:#018x}")]
    FingerprintMismatch { cached: u64, current: u64 },
    #[error("admissibility violated: {0}")]
    Inadmissible(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("problem has no exact solution for member {0}")]
    MissingExact(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HdgError>;
