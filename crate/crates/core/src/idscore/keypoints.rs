//! BODY_25 → 15-joint core → COCO-17 conversion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::nn::{leaky_relu_gain, Adam, AdamConfig, ParamGroup, ParamStore, Tape};
use crate::skeleton::{body25, BODY25_JOINTS, COCO17_FROM_BODY25, COCO17_FROM_CORE15, COCO17_JOINTS, CORE15_FROM_BODY25, CORE15_JOINTS};
use crate::tensor::Tensor;

fn check_joints(clip: &MotionClip, expected: usize) -> Result<()> {
    if clip.joints() != expected {
        return Err(Error::Arity {
            expected,
            found: clip.joints(),
        });
    }
    Ok(())
}

/// Keeps the listed joints (x and y rows) in the given order.
pub fn select_joints(clip: &MotionClip, joints: &[usize]) -> Result<MotionClip> {
    let j = clip.joints();
    if let Some(&bad) = joints.iter().find(|&&i| i >= j) {
        return Err(Error::Arity { expected: j, found: bad + 1 });
    }
    let rows: Vec<usize> = joints.iter().copied().chain(joints.iter().map(|&i| j + i)).collect();
    clip.with_data(clip.data().select_rows(&rows))
}

pub fn map_25_to_15(clip: &MotionClip) -> Result<MotionClip> {
    check_joints(clip, BODY25_JOINTS)?;
    select_joints(clip, &CORE15_FROM_BODY25)
}

/// Writes the 15 core joints back into a copy of `base`.
pub fn scatter_15_to_25(core: &MotionClip, base: &MotionClip) -> Result<MotionClip> {
    check_joints(core, CORE15_JOINTS)?;
    check_joints(base, BODY25_JOINTS)?;
    let mut data = base.data().clone();
    for (c, &b) in CORE15_FROM_BODY25.iter().enumerate() {
        data.row_mut(b).copy_from_slice(core.data().row(c));
        data.row_mut(BODY25_JOINTS + b).copy_from_slice(core.data().row(CORE15_JOINTS + c));
    }
    base.with_data(data)
}

/// Ground-truth COCO-17 layout of a BODY_25 clip.
pub fn coco_from_body25(clip: &MotionClip) -> Result<MotionClip> {
    check_joints(clip, BODY25_JOINTS)?;
    select_joints(clip, &COCO17_FROM_BODY25)
}

/// Face placement of the linear baseline: each COCO eye/ear sits at
/// `nose + along · d + across · perp(d)` with `d = nose − neck`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceOffsets {
    pub eye_along: f64,
    pub eye_across: f64,
    pub ear_along: f64,
    pub ear_across: f64,
}

impl Default for FaceOffsets {
    fn default() -> Self {
        Self {
            eye_along: 0.12,
            eye_across: 0.2,
            ear_along: -0.04,
            ear_across: 0.44,
        }
    }
}

/// Per-frame `30 → hidden → 34` perceptron with no biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpMapper {
    pub w1: Tensor,
    pub w2: Tensor,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapperFitConfig {
    pub hidden: usize,
    pub iterations: usize,
    pub frames_per_batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MapperFitConfig {
    fn default() -> Self {
        Self {
            hidden: 96,
            iterations: 3000,
            frames_per_batch: 256,
            lr: 3e-3,
            seed: 0,
        }
    }
}

impl MlpMapper {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: Tensor::zeros(hidden, 2 * CORE15_JOINTS),
            w2: Tensor::zeros(2 * COCO17_JOINTS, hidden),
            slope: 0.2,
        }
    }

    pub fn apply(&self, core: &MotionClip) -> Result<MotionClip> {
        check_joints(core, CORE15_JOINTS)?;
        let h = self.w1.matmul(core.data()).map(|v| if v > 0.0 { v } else { self.slope * v });
        core.with_data(self.w2.matmul(&h))
    }

    /// Fits on frame pairs `(15-joint clip, COCO-17 clip)` with an L1
    /// objective and full-frame mini-batches.
    pub fn fit(pairs: &[(MotionClip, MotionClip)], config: &MapperFitConfig) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Fit("mapper needs at least one training pair".into()));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (x, y) in pairs {
            check_joints(x, CORE15_JOINTS)?;
            check_joints(y, COCO17_JOINTS)?;
            if x.frames() != y.frames() {
                return Err(Error::Fit("paired clips differ in length".into()));
            }
            for t in 0..x.frames() {
                xs.push((0..2 * CORE15_JOINTS).map(|r| x.data()[(r, t)]).collect::<Vec<_>>());
                ys.push((0..2 * COCO17_JOINTS).map(|r| y.data()[(r, t)]).collect::<Vec<_>>());
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let gain = leaky_relu_gain(0.2);
        let n_in = 2 * CORE15_JOINTS;
        let w1 = store.add_normal(&mut rng, "w1", ParamGroup::Generator, (config.hidden, n_in), n_in, gain);
        let w2 = store.add_normal(
            &mut rng,
            "w2",
            ParamGroup::Generator,
            (2 * COCO17_JOINTS, config.hidden),
            config.hidden,
            1.0,
        );
        let mut adam = Adam::new(
            AdamConfig {
                beta1: 0.9,
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
            ParamGroup::Generator,
        );
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let batch = config.frames_per_batch.min(xs.len()).max(1);
        let mut cursor = order.len();
        for it in 0..config.iterations {
            let mut picked = Vec::with_capacity(batch);
            while picked.len() < batch {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                picked.push(order[cursor]);
                cursor += 1;
            }
            let column_major = |src: &[Vec<f64>], rows: usize| {
                let mut t = Tensor::zeros(rows, picked.len());
                for (c, &i) in picked.iter().enumerate() {
                    for r in 0..rows {
                        t[(r, c)] = src[i][r];
                    }
                }
                t
            };
            let x = column_major(&xs, n_in);
            let y = column_major(&ys, 2 * COCO17_JOINTS);
            let mut tape = Tape::new();
            let (xv, yv) = (tape.constant(x), tape.constant(y));
            let (a, b) = (tape.param(&store, w1), tape.param(&store, w2));
            let h = tape.matmul(a, xv);
            let h = tape.leaky_relu(h, 0.2);
            let out = tape.matmul(b, h);
            let loss = tape.mean_abs_diff(out, yv);
            let grads = tape.backward(loss).param_grads(&tape);
            let progress = it as f64 / config.iterations.max(1) as f64;
            let lr = config.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            adam.step(&mut store, &grads, lr);
        }
        Ok(Self {
            w1: store.value(w1).clone(),
            w2: store.value(w2).clone(),
            slope: 0.2,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KeypointMapper {
    /// Copies shared joints; places the face from nose and neck.
    Linear(FaceOffsets),
    Mlp(MlpMapper),
    /// No trained weights and no baseline selected.
    Unavailable,
}

impl KeypointMapper {
    pub fn map_15_to_17(&self, core: &MotionClip) -> Result<MotionClip> {
        check_joints(core, CORE15_JOINTS)?;
        match self {
            Self::Mlp(m) => m.apply(core),
            Self::Linear(face) => linear_face(core, face),
            Self::Unavailable => Err(Error::Config(
                "15 → 17 mapping needs a trained mapper or the linear baseline".into(),
            )),
        }
    }

    pub fn to_coco17(&self, clip: &MotionClip) -> Result<MotionClip> {
        self.map_15_to_17(&map_25_to_15(clip)?)
    }
}

fn linear_face(core: &MotionClip, face: &FaceOffsets) -> Result<MotionClip> {
    let j = CORE15_JOINTS;
    let frames = core.frames();
    let mut out = Tensor::zeros(2 * COCO17_JOINTS, frames);
    for (coco, src) in COCO17_FROM_CORE15.iter().enumerate() {
        if let Some(c) = src {
            out.row_mut(coco).copy_from_slice(core.data().row(*c));
            out.row_mut(COCO17_JOINTS + coco).copy_from_slice(core.data().row(j + c));
        }
    }
    let (nose, neck) = (body25::NOSE, body25::NECK);
    // COCO order: left eye, right eye, left ear, right ear. The figure's
    // right lies on perp(d) = (d_y, −d_x).
    let placements = [
        (1, face.eye_along, -face.eye_across),
        (2, face.eye_along, face.eye_across),
        (3, face.ear_along, -face.ear_across),
        (4, face.ear_along, face.ear_across),
    ];
    for t in 0..frames {
        let (nx, ny) = (core.data()[(nose, t)], core.data()[(j + nose, t)]);
        let (dx, dy) = (nx - core.data()[(neck, t)], ny - core.data()[(j + neck, t)]);
        let (px, py) = (dy, -dx);
        for &(coco, along, across) in &placements {
            out[(coco, t)] = nx + along * dx + across * px;
            out[(COCO17_JOINTS + coco, t)] = ny + along * dy + across * py;
        }
    }
    core.with_data(out)
}

/// `(15-joint, COCO-17)` training pairs cut from BODY_25 clips.
pub fn mapper_pairs(clips: &[&MotionClip]) -> Result<Vec<(MotionClip, MotionClip)>> {
    clips.iter().map(|c| Ok((map_25_to_15(c)?, coco_from_body25(c)?))).collect()
}

/// Mean absolute coordinate error of `mapper` on the given BODY_25 clips.
pub fn mapper_l1(mapper: &KeypointMapper, clips: &[&MotionClip]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for c in clips {
        let got = mapper.to_coco17(c)?;
        let truth = coco_from_body25(c)?;
        total += got.data().data().iter().zip(truth.data().data()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += truth.data().len();
    }
    Ok(total / count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{synth_generate, synth_generate_with, SynthConfig};

    fn synth_clips(n_ids: usize, seed: u64) -> Vec<MotionClip> {
        synth_generate(n_ids, 4, 32, seed).unwrap().clips().cloned().collect()
    }

    #[test]
    fn core_round_trip_restores_shared_joints() {
        let clips = synth_clips(2, 1);
        let clip = &clips[0];
        let core = map_25_to_15(clip).unwrap();
        assert_eq!(core.joints(), 15);
        let mut blank = clip.data().clone();
        blank.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let back = scatter_15_to_25(&core, &clip.with_data(blank).unwrap()).unwrap();
        for &j in &CORE15_FROM_BODY25 {
            for t in 0..clip.frames() {
                assert_eq!(back.point(j, t), clip.point(j, t));
            }
        }
    }

    #[test]
    fn wrong_joint_counts_are_arity_errors() {
        let clip = map_25_to_15(&synth_clips(2, 2)[0]).unwrap();
        assert!(matches!(map_25_to_15(&clip), Err(Error::Arity { expected: 25, found: 15 })));
        let coco = coco_from_body25(&synth_clips(2, 2)[0]).unwrap();
        assert!(matches!(
            KeypointMapper::Linear(FaceOffsets::default()).map_15_to_17(&coco),
            Err(Error::Arity { expected: 15, found: 17 })
        ));
    }

    #[test]
    fn zero_weight_mapper_outputs_zeros() {
        let core = map_25_to_15(&synth_clips(2, 3)[0]).unwrap();
        let out = KeypointMapper::Mlp(MlpMapper::zeros(8)).map_15_to_17(&core).unwrap();
        assert_eq!(out.joints(), 17);
        assert!(out.data().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_mapper_is_a_config_error() {
        let core = map_25_to_15(&synth_clips(2, 4)[0]).unwrap();
        assert!(matches!(KeypointMapper::Unavailable.map_15_to_17(&core), Err(Error::Config(_))));
    }

    #[test]
    fn linear_baseline_copies_shared_joints_and_fits_synthetic_faces() {
        let mut config = SynthConfig::new(3, 4, 32, 5);
        config.noise_px = 0.0;
        let clips: Vec<MotionClip> = synth_generate_with(&config).unwrap().clips().cloned().collect();
        let refs: Vec<&MotionClip> = clips.iter().collect();
        let mapper = KeypointMapper::Linear(FaceOffsets::default());
        for c in &refs {
            let got = mapper.to_coco17(c).unwrap();
            let truth = coco_from_body25(c).unwrap();
            for (coco, src) in COCO17_FROM_CORE15.iter().enumerate() {
                if src.is_some() {
                    assert_eq!(got.data().row(coco), truth.data().row(coco));
                }
            }
        }
        assert!(mapper_l1(&mapper, &refs).unwrap() < 1e-9);
    }

    #[test]
    fn trained_mapper_reaches_target_accuracy() {
        let train = synth_clips(6, 6);
        let test = synth_clips(4, 7);
        let pairs = mapper_pairs(&train.iter().collect::<Vec<_>>()).unwrap();
        let config = MapperFitConfig {
            iterations: 1500,
            ..MapperFitConfig::default()
        };
        let mlp = MlpMapper::fit(&pairs, &config).unwrap();
        let l1 = mapper_l1(&KeypointMapper::Mlp(mlp), &test.iter().collect::<Vec<_>>()).unwrap();
        assert!(l1 < 0.01, "held-out per-joint L1 {l1}");
    }
}
