use thiserror::Error;

/// Errors surfaced by the toolkit. Recoverable numerical conditions
/// (component collapse, variance clamping, ridge fallbacks) are not errors;
/// they are counted as warnings in the corresponding training reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("relevance factor must be >= 0, got {0}")]
    NegativeRelevanceFactor(f64),
    #[error("supervector set is empty")]
    EmptySet,
    #[error("i-vector precision matrix is not positive definite")]
    SingularPrecision,
    #[error("supervision targets required for train-side extraction")]
    MissingSupervision,
    #[error("speaker {0} has no training utterances")]
    SpeakerWithNoUtterances(String),
    #[error("PLDA training requires at least two speakers")]
    SingleSpeaker,
    #[error("PLDA rank {q} exceeds i-vector dimension {d}")]
    RankTooLarge { q: usize, d: usize },
    #[error("trial set contains only one label class")]
    OneClassOnly,
    #[error("rate must lie strictly inside (0, 1), got {0}")]
    DegenerateRate(f64),
    #[error("not enough utterances to sample the requested trial list")]
    InsufficientUtterances,
    #[error("missing upstream artifact for stage {stage}: {path}")]
    MissingUpstream { stage: String, path: String },
    #[error("inconsistent configuration in stage {stage}: {reason}")]
    ConfigInconsistent { stage: String, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
