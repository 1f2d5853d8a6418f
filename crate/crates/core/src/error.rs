use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ambient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("ambient dimension {0} outside supported range 2..=8")]
    UnsupportedDimension(usize),

    #[error("grade mismatch: {0} vs {1}")]
    GradeMismatch(usize, usize),

    #[error("invalid grade combination: {0}")]
    InvalidGrade(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unknown surface `{0}`")]
    UnknownSurface(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("immersion degenerate at node ({i}, {j}): det g = {det:e}")]
    ImmersionDegenerate { i: usize, j: usize, det: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("row count mismatch: header implies {expected} rows, found {found}")]
    RowCountMismatch { expected: usize, found: usize },

    #[error("insufficient margin: {0}")]
    InsufficientMargin(String),

    #[error("field is not normal: tangential part {defect:e} at node {node}")]
    NotNormal { node: usize, defect: f64 },

    #[error("solver failure in stage `{stage}`: relative residual {residual:e} after {iterations} iterations")]
    SolverFailure {
        stage: String,
        residual: f64,
        iterations: usize,
    },

    #[error("{0}")]
    Validation(String),

    #[error("metric degenerated during flow at step {step}: det g = {det:e}")]
    FlowDegenerate { step: usize, det: f64 },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolverFailure { .. } => 3,
            _ => 2,
        }
    }
}
