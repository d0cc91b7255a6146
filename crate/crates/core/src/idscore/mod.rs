//! Identity-transfer evaluation with an off-the-shelf style gait recognizer.

mod embedder;
mod keypoints;
mod protocol;

pub use embedder::{clip_to_text, BaselineEmbedder, EmbedderConfig, ExternalEmbedder, GaitEmbedder};
pub use keypoints::{
    coco_from_body25, map_25_to_15, mapper_l1, mapper_pairs, scatter_15_to_25, select_joints, FaceOffsets,
    KeypointMapper, MapperFitConfig, MlpMapper,
};
pub use protocol::{
    evaluate_idscore, one_nn_accuracy, rank_from_embeddings, rank_metrics, split_gallery_probe, GalleryProbe, IdScoreEvaluation,
    IdScoreReport, RankReport,
};
