use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("homography estimation failed: {0}")]
    Estimation(&'static str),
    #[error("invalid quad: {0}")]
    InvalidQuad(&'static str),
    #[error("invalid detection box: {0}")]
    InvalidBox(&'static str),
    #[error("invalid line segment: {0}")]
    InvalidSegment(&'static str),
    #[error("no vertical vanishing point available")]
    MissingVertical,
    #[error("no horizontal vanishing point available")]
    MissingHorizontal,
    #[error("box adjustment failed: {0}")]
    Adjustment(&'static str),
    #[error("degenerate rectifier: {0}")]
    RectifierDegenerate(&'static str),
    #[error("backprojection failed: {0}")]
    Backprojection(&'static str),
    #[error("no descriptors to pool")]
    NoDescriptor,
    #[error("descriptor dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
}
