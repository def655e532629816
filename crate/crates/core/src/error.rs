use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tracklet {later} does not start after tracklet {earlier} ends")]
    Ordering { earlier: u64, later: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("tracklet {0} has detections without feature vectors")]
    MissingFeatures(u64),

    #[error("no metric or probe for tracklet {0}")]
    MissingModel(u64),

    #[error("metric learning needs at least one positive and one negative pair")]
    EmptyPairs,

    #[error("metric learning diverged: non-finite loss")]
    NonFiniteLoss,

    #[error("detection score {0} outside (0, 1)")]
    Score(f64),

    #[error("flow graph contains a cycle")]
    Cyclic,

    #[error("cover infeasible, uncoverable nodes: {0:?}")]
    Infeasible(Vec<usize>),

    #[error("hankel matrix needs at least 3 samples, got {0}")]
    ShortSequence(usize),

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
