//! Pose sequences, clips, the identity × content index and triplet sampling.

mod clip;
mod index;
mod raw;
pub mod synth;

pub use clip::{
    normalize, read_container, trim_clips, write_container, ContainerHeader, MotionClip, DEFAULT_CLIP_FRAMES,
};
pub use index::{sample_triplet, DatasetIndex, Split, TripletSample};
pub use raw::{
    clean_frames, frame_from_flat, load_raw_sequence, pad_missing, save_raw_sequence, Frame, Keypoint, RawFormat,
    RawSequence, DEFAULT_FPS, MAX_MISSING_JOINTS, PAD_WINDOW,
};
