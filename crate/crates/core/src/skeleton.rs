//! Keypoint layouts: OpenPose BODY_25, its 15-joint core subset, and COCO-17.

pub const BODY25_JOINTS: usize = 25;
pub const CORE15_JOINTS: usize = 15;
pub const COCO17_JOINTS: usize = 17;

pub const BODY25_NAMES: [&str; BODY25_JOINTS] = [
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist", "MidHip",
    "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye", "REar", "LEar",
    "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
];

pub mod body25 {
    pub const NOSE: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const MID_HIP: usize = 8;
    pub const R_HIP: usize = 9;
    pub const R_KNEE: usize = 10;
    pub const R_ANKLE: usize = 11;
    pub const L_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const L_ANKLE: usize = 14;
    pub const R_EYE: usize = 15;
    pub const L_EYE: usize = 16;
    pub const R_EAR: usize = 17;
    pub const L_EAR: usize = 18;
    pub const L_BIG_TOE: usize = 19;
    pub const L_SMALL_TOE: usize = 20;
    pub const L_HEEL: usize = 21;
    pub const R_BIG_TOE: usize = 22;
    pub const R_SMALL_TOE: usize = 23;
    pub const R_HEEL: usize = 24;
}

/// BODY_25 limb graph as (parent, child) pairs.
pub const BODY25_LIMBS: [(usize, usize); 24] = [
    (1, 8),
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (1, 0),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
];

/// BODY_25 indices kept by the 25 → 15 reduction: nose through ankles.
pub const CORE15_FROM_BODY25: [usize; CORE15_JOINTS] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14];

pub const COCO17_NAMES: [&str; COCO17_JOINTS] = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip", "right_hip", "left_knee",
    "right_knee", "left_ankle", "right_ankle",
];

/// For each COCO-17 joint, the BODY_25 joint carrying the same landmark.
pub const COCO17_FROM_BODY25: [usize; COCO17_JOINTS] = [0, 16, 15, 18, 17, 5, 2, 6, 3, 7, 4, 12, 9, 13, 10, 14, 11];

/// For each COCO-17 joint, its source in the 15-joint core layout, or
/// `None` for the face joints the core layout lacks.
pub const COCO17_FROM_CORE15: [Option<usize>; COCO17_JOINTS] = [
    Some(0),
    None,
    None,
    None,
    None,
    Some(5),
    Some(2),
    Some(6),
    Some(3),
    Some(7),
    Some(4),
    Some(12),
    Some(9),
    Some(13),
    Some(10),
    Some(14),
    Some(11),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_agree_on_shared_joints() {
        for (coco, src) in COCO17_FROM_CORE15.iter().enumerate() {
            if let Some(core) = src {
                assert_eq!(CORE15_FROM_BODY25[*core], COCO17_FROM_BODY25[coco]);
            }
        }
        for (a, b) in BODY25_LIMBS {
            assert!(a < BODY25_JOINTS && b < BODY25_JOINTS);
        }
    }
}
