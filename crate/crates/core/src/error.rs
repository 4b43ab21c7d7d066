use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("diversity threshold {0} outside [0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid label value {value} at position {index} (labels must be 0 or 1)")]
    InvalidLabel { index: usize, value: u8 },
    #[error("invalid instance sample: {0}")]
    InvalidInstances(String),
    #[error("noisy sample failed DNLS validation: {0}")]
    InvalidDnls(String),
    #[error("invalid knowledge base: {0}")]
    InvalidKnowledgeBase(String),
    #[error("inconsistencies were not produced from this grounding set and knowledge base")]
    PreconditionViolation,
    #[error("target spec {target_id} references branch {branch} but only {d} branches exist")]
    SpecOutOfRange { target_id: usize, branch: usize, d: usize },
    #[error("target spec {target_id}: {reason}")]
    InvalidSpec { target_id: usize, reason: String },
    #[error("soft boundary width {width} must be smaller than n = {n}")]
    WidthTooLarge { width: usize, n: usize },
    #[error("instance index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid alpha weights: {0}")]
    InvalidAlpha(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid synthetic config: {0}")]
    InvalidSynthConfig(String),
    #[error("could not place intervals after {rejections} rejections")]
    PlacementInfeasible { rejections: usize },
    #[error("annotators {a} and {b} are still not diverse after {retries} retries")]
    DiversityUnreachable { a: usize, b: usize, retries: usize },
    #[error("noisy sample has no ground-truth labels")]
    MissingTruth,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
