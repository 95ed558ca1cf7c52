use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("collision overlap: non-positive gap {gap:.3} m to leader")]
    Overlap { gap: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown driver profile `{0}`")]
    UnknownProfile(String),

    #[error("absorbing chain: effective transition probabilities sum to zero")]
    AbsorbingChain,

    #[error("step called after the episode finished")]
    EpisodeDone,

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("stale activation cache: network parameters changed since forward pass")]
    StaleCache,

    #[error("empty sequence")]
    EmptySequence,

    #[error("non-finite gradient at parameter index {0}")]
    NonFiniteGradient(usize),

    #[error("policy assigns zero probability to action {0}")]
    ZeroProbability(usize),

    #[error("pool mixes driver ids {0} and {1}")]
    HeterogeneousPool(u32, u32),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
