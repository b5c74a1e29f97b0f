use thiserror::Error;

pub type Result<T> = std::result::Result<T, ScanError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("invalid dimensions {dims:?}: {reason}")]
    InvalidDims { dims: Vec<usize>, reason: String },

    #[error("data length {got} does not match product of dims {expected}")]
    DataLength { expected: usize, got: usize },

    #[error("non-finite value at linear index {index}")]
    NonFinite { index: usize },

    #[error("rectangle anchor={anchor:?} shape={shape:?} does not fit grid {dims:?}")]
    OutOfBounds {
        anchor: Vec<usize>,
        shape: Vec<usize>,
        dims: Vec<usize>,
    },

    #[error("invalid rectangle: {0}")]
    InvalidRect(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("grid must be a cube [n]^d, got dims {0:?}")]
    NotCubic(Vec<usize>),

    #[error("n must be a power of two, got {0}")]
    NotPowerOfTwo(usize),

    #[error("level alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("invalid shape range: {0}")]
    InvalidRange(String),

    #[error("shape {shape:?} outside [{h_lo}, {h_hi}]^d")]
    ShapeOutOfRange {
        shape: Vec<usize>,
        h_lo: usize,
        h_hi: usize,
    },

    #[error("invalid epsilon: {0}")]
    InvalidEpsilon(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient replicates: {0}")]
    InsufficientReps(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ScanError {
    fn from(e: std::io::Error) -> Self {
        ScanError::Io(e.to_string())
    }
}
