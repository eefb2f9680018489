use thiserror::Error;

/// Which end of a two-sided window ran out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {row} is not stochastic (sum = {sum})")]
    NonStochastic { row: usize, sum: f64 },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("transition matrix is reducible: no unique positive stationary law")]
    Reducible,

    #[error("chain too large for dense solve ({0} states, limit 64)")]
    ChainTooLarge(usize),

    #[error("index {index} outside window {lo}..={hi}")]
    OutOfRange { index: i64, lo: i64, hi: i64 },

    #[error("window cannot be extended for this source (custom sources need a declared margin)")]
    UnsupportedExtension,

    #[error("insufficient window on the {side} side: time-change index {needed_k} not determined")]
    InsufficientWindow { side: Side, needed_k: i64 },

    #[error("coverage gap: {0}")]
    CoverageGap(String),

    #[error("window growth exceeded cap of {cap} indices")]
    WindowCapExceeded { cap: usize },

    #[error("MID source is degenerate: {0}")]
    NonErgodicMid(String),

    #[error("probability mass outside the enumeration window is {mass:e}, above tolerance {tolerance:e}")]
    DeficitTooLarge { mass: f64, tolerance: f64 },

    #[error("gap overflow atom carries {mass} of the gap mass (> 10%); raise gap_cap")]
    CapTooSmall { mass: f64 },

    #[error("operation requires an iid or Markov source")]
    ExactPathUnsupported,

    #[error("table too large: {0} cells")]
    TableTooLarge(usize),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("degenerate 0/1 source: p = {0}")]
    DegenerateSource(f64),

    #[error("degenerate variance: sigma^2 = {0}")]
    DegenerateVariance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
