use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {source_name} (frame {frame}): {reason}")]
    Format {
        source_name: String,
        frame: usize,
        reason: String,
    },

    #[error("no input frames found at {0}")]
    EmptyInput(PathBuf),

    #[error("joint {joint} at frame {frame} is missing everywhere in the sequence")]
    UnreconstructableJoint { frame: usize, joint: usize },

    #[error("degenerate pose: {0}")]
    DegeneratePose(String),

    #[error("insufficient label diversity: {0}")]
    InsufficientDiversity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing ground truth clip for identity {id_label:?} performing {mc_label:?}")]
    MissingGroundTruth { id_label: String, mc_label: String },

    #[error("batch has no valid (anchor, positive, negative) triple")]
    UndefinedBatch,

    #[error("training diverged at step {step}: loss term `{term}` is not finite")]
    Divergence { term: String, step: u64 },

    #[error("gallery/probe split failed: {0}")]
    Split(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("arity error: expected {expected} joints, found {found}")]
    Arity { expected: usize, found: usize },

    #[error("embedder error: {0}")]
    Embedder(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
