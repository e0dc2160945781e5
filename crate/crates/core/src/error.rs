use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sample space: {0}")]
    Space(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("point {0} is covered by no cover set")]
    Uncovered(usize),
    #[error("cocycle violation: {0}")]
    Cocycle(String),
    #[error("bundle mismatch: {0}")]
    BundleMismatch(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("not a projection: {0}")]
    NotProjection(String),
    #[error("not unitary: {0}")]
    NotUnitary(String),
    #[error("missing chart data: {0}")]
    NoCharts(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("formula disagreement: {0}")]
    Disagreement(String),
}

pub type Result<T> = std::result::Result<T, Error>;
