use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid data space: {0}")]
    InvalidSpace(String),

    #[error("region has no analytic or quadrature measure; a Monte Carlo configuration is required")]
    McRequired,

    #[error("degenerate z-score: M + M' = {total} with N = {n} (no spikes at all, or spikes everywhere)")]
    DegenerateZ { total: u64, n: u64 },

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("function size must be at least 1, got {0}")]
    InvalidSize(u64),

    #[error("max-correlation function needs at least one reference vector")]
    EmptyReferences,

    #[error("rejection sampling failed {attempts} consecutive times in component {component}")]
    SamplingFailed { component: usize, attempts: u64 },

    #[error("singular efficiency: region of measure {measure} carries data mass {mass}")]
    SingularRegion { measure: f64, mass: f64 },

    #[error("inconsistent density bound: omega = {omega} is below 1/|S| = {min}")]
    InconsistentBound { omega: f64, min: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("evaluation mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("unsupported in this mode: {0}")]
    Unsupported(String),

    #[error("sequence must contain at least one function")]
    EmptySequence,

    #[error("search budget must be positive")]
    ZeroBudget,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("IDX format error at byte offset {offset}: {message}")]
    Idx { offset: usize, message: String },

    #[error("IDX file truncated: expected {expected} bytes, found {actual}")]
    IdxTruncated { expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
