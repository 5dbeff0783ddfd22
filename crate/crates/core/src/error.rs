use thiserror::Error;

/// Errors produced by node generation, patch spaces, stencil solves and global assembly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not an interpolation set: rank {rank}, space dimension {dim}, {nodes} nodes")]
    NotISet { rank: usize, dim: usize, nodes: usize },

    #[error("exactness conditions are not solvable: rank {rank} over {basis} basis functions, defect {defect:e}")]
    UnsolvableExactness { rank: usize, basis: usize, defect: f64 },

    #[error("node {0} is not covered by any patch")]
    UncoveredNode(usize),

    #[error("overlap spline space is not interpolatory ({failing} patches fail the I-set test)")]
    NotInterpolatory { failing: usize },

    #[error("connection condition violated at node {node} between patches {first} and {second} (difference {diff:e})")]
    InconsistentSpline {
        node: usize,
        first: usize,
        second: usize,
        diff: f64,
    },

    #[error("{coefficients} patch coefficients exceed the dense analysis limit of {limit}; analyze a smaller sample")]
    TooLarge { coefficients: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("assembly failed at row {row} (patch {patch}): {source}")]
    Assembly {
        row: usize,
        patch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular system (1-norm condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("point is not covered by any partition-of-unity ball")]
    NotCovered,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("convergence study aborted at level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::NotISet { .. } => "not-iset",
            Error::UnsolvableExactness { .. } => "unsolvable-exactness",
            Error::UncoveredNode(_) => "uncovered-node",
            Error::NotInterpolatory { .. } => "not-interpolatory",
            Error::InconsistentSpline { .. } => "inconsistent-spline",
            Error::TooLarge { .. } => "too-large",
            Error::Config(_) => "config",
            Error::Assembly { .. } => "assembly",
            Error::SingularSystem { .. } => "singular-system",
            Error::Factorization(_) => "factorization",
            Error::NotCovered => "not-covered",
            Error::UnknownPreset(_) => "unknown-preset",
            Error::Level { .. } => "level",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
