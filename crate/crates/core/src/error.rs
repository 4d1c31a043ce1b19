use thiserror::Error;

/// Errors produced by the estimation pipeline and its file formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is rank deficient (second singular value {0:e})")]
    RankDeficient(f64),
    #[error("point lies at the epipole; epipolar line is undefined")]
    DegenerateLine,
    #[error("constraint matrix null space has dimension {0} (degenerate configuration)")]
    RankDeficientConstraints(usize),
    #[error("every sign assignment produced a degenerate configuration")]
    AllDegenerate,
    #[error("insufficient data: need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no non-degenerate hypothesis could be generated")]
    AllHypothesesDegenerate,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate motion: relative translation norm {0:e} is too small")]
    DegenerateMotion(f64),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("scene has no dense coverage")]
    SparseScene,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
