//! Synthetic identity × content motion grid.
//!
//! Every clip is a 25-joint stick figure driven by ten hierarchical joint
//! angles. A *content* fixes the waveform, frequency, amplitudes and phases
//! of those angles; an *identity* restyles any content through a per-angle
//! amplitude scale, phase offset and static posture bias. Bone lengths are
//! shared by all identities, so identity lives only in the dynamics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::clip::{normalize, MotionClip};
use super::index::DatasetIndex;
use crate::error::Result;
use crate::skeleton::{body25 as b, BODY25_JOINTS};
use crate::tensor::Tensor;

pub const N_DOF: usize = 10;

pub const DOF_NAMES: [&str; N_DOF] = [
    "spine", "head", "r_upper_arm", "r_forearm", "l_upper_arm", "l_forearm", "r_thigh", "r_shin",
    "l_thigh", "l_shin",
];

const REST: [f64; N_DOF] = [0.0, 0.0, -0.3, -0.2, 0.3, 0.2, -0.08, 0.0, 0.08, 0.0];
const AMPLITUDE_RANGE: [(f64, f64); N_DOF] = [
    (0.05, 0.2),
    (0.1, 0.3),
    (0.4, 1.2),
    (0.3, 1.0),
    (0.4, 1.2),
    (0.3, 1.0),
    (0.2, 0.6),
    (0.2, 0.6),
    (0.2, 0.6),
    (0.2, 0.6),
];
const OFFSET_RANGE: [f64; N_DOF] = [0.05, 0.1, 0.4, 0.3, 0.4, 0.3, 0.1, 0.1, 0.1, 0.1];
const BIAS_RANGE: [f64; N_DOF] = [0.1, 0.2, 0.3, 0.3, 0.3, 0.3, 0.2, 0.2, 0.2, 0.2];

const SPINE: f64 = 100.0;
const NECK_TO_NOSE: f64 = 25.0;
const SHOULDER_HALF: f64 = 20.0;
const HIP_HALF: f64 = 15.0;
const UPPER_ARM: f64 = 45.0;
const FOREARM: f64 = 40.0;
const THIGH: f64 = 50.0;
const SHIN: f64 = 48.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Waveform {
    Sine,
    Triangle,
    SoftSquare,
    Harmonic,
}

impl Waveform {
    pub fn eval(self, theta: f64) -> f64 {
        match self {
            Self::Sine => theta.sin(),
            Self::Triangle => (2.0 / PI) * theta.sin().asin(),
            Self::SoftSquare => (3.0 * theta.sin()).tanh() / 3f64.tanh(),
            Self::Harmonic => (theta.sin() + 0.5 * (2.0 * theta + 0.7).sin()) / 1.5,
        }
    }
}

/// Content-defined angle trajectories.
#[derive(Clone, Debug)]
pub struct ContentMotion {
    pub waveform: Waveform,
    /// Cycles per reference clip length.
    pub frequency: f64,
    pub amplitude: [f64; N_DOF],
    pub phase: [f64; N_DOF],
    pub offset: [f64; N_DOF],
    pub root_amplitude: (f64, f64),
    pub root_phase: (f64, f64),
}

/// Identity-defined restyling applied to any content.
#[derive(Clone, Debug)]
pub struct IdentityStyle {
    pub scale: [f64; N_DOF],
    pub phase: [f64; N_DOF],
    pub bias: [f64; N_DOF],
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_ids: usize,
    pub n_contents: usize,
    pub frames: usize,
    pub clips_per_cell: usize,
    pub seed: u64,
    /// Standard deviation of per-joint jitter, in pixels at a 100 px torso.
    pub noise_px: f64,
}

impl SynthConfig {
    pub fn new(n_ids: usize, n_contents: usize, frames: usize, seed: u64) -> Self {
        Self {
            n_ids,
            n_contents,
            frames,
            clips_per_cell: 2,
            seed,
            noise_px: 1.0,
        }
    }
}

pub fn id_label(i: usize) -> String {
    format!("id{i:02}")
}

pub fn mc_label(c: usize) -> String {
    format!("mc{c:02}")
}

#[derive(Clone, Debug)]
pub struct SynthWorld {
    pub contents: Vec<ContentMotion>,
    pub identities: Vec<IdentityStyle>,
    pub frames: usize,
    seed: u64,
}

impl SynthWorld {
    pub fn new(n_ids: usize, n_contents: usize, frames: usize, seed: u64) -> Self {
        let contents = (0..n_contents)
            .map(|c| {
                let mut rng = stream_rng(seed, 1, c as u64);
                let waveform = [Waveform::Sine, Waveform::Triangle, Waveform::SoftSquare, Waveform::Harmonic][c % 4];
                let frequency = 1.0 + 0.5 * ((c + 2 * (c / 4)) % 5) as f64;
                let mut m = ContentMotion {
                    waveform,
                    frequency,
                    amplitude: [0.0; N_DOF],
                    phase: [0.0; N_DOF],
                    offset: [0.0; N_DOF],
                    root_amplitude: (rng.random_range(0.0..10.0), rng.random_range(3.0..10.0)),
                    root_phase: (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)),
                };
                for d in 0..N_DOF {
                    let (lo, hi) = AMPLITUDE_RANGE[d];
                    m.amplitude[d] = rng.random_range(lo..hi);
                    m.phase[d] = rng.random_range(0.0..2.0 * PI);
                    m.offset[d] = rng.random_range(-OFFSET_RANGE[d]..OFFSET_RANGE[d]);
                }
                m
            })
            .collect();
        let identities = (0..n_ids)
            .map(|i| {
                let mut rng = stream_rng(seed, 2, i as u64);
                let mut s = IdentityStyle {
                    scale: [1.0; N_DOF],
                    phase: [0.0; N_DOF],
                    bias: [0.0; N_DOF],
                };
                for d in 0..N_DOF {
                    s.scale[d] = rng.random_range(0.6..1.4);
                    s.phase[d] = rng.random_range(-0.8..0.8);
                    s.bias[d] = rng.random_range(-BIAS_RANGE[d]..BIAS_RANGE[d]);
                }
                s
            })
            .collect();
        Self {
            contents,
            identities,
            frames,
            seed,
        }
    }

    fn omega(&self, c: usize) -> f64 {
        2.0 * PI * self.contents[c].frequency / self.frames as f64
    }

    /// Content-only angle of degree of freedom `d` at (fractional) frame `t`.
    pub fn base_angle(&self, c: usize, d: usize, t: f64) -> f64 {
        let m = &self.contents[c];
        REST[d] + m.offset[d] + m.amplitude[d] * m.waveform.eval(self.omega(c) * t + m.phase[d])
    }

    /// Angle of `d` when identity `i` performs content `c`.
    pub fn styled_angle(&self, i: usize, c: usize, d: usize, t: f64) -> f64 {
        let m = &self.contents[c];
        let s = &self.identities[i];
        REST[d]
            + m.offset[d]
            + s.bias[d]
            + s.scale[d] * m.amplitude[d] * m.waveform.eval(self.omega(c) * t + m.phase[d] + s.phase[d])
    }

    /// Inverts identity `i`'s restyling of `d`: reads the styled angle at
    /// the phase-compensated time and removes bias and scale, recovering
    /// [`SynthWorld::base_angle`].
    pub fn destyled_angle(&self, i: usize, c: usize, d: usize, t: f64) -> f64 {
        let m = &self.contents[c];
        let s = &self.identities[i];
        let shifted = t - s.phase[d] / self.omega(c);
        let styled = self.styled_angle(i, c, d, shifted);
        REST[d] + m.offset[d] + (styled - REST[d] - m.offset[d] - s.bias[d]) / s.scale[d]
    }

    /// Pixel-space (y down) pose of identity `i` performing `c` at frame `t`.
    pub fn pose(&self, i: usize, c: usize, t: f64) -> [(f64, f64); BODY25_JOINTS] {
        let angles: [f64; N_DOF] = std::array::from_fn(|d| self.styled_angle(i, c, d, t));
        let m = &self.contents[c];
        let w = self.omega(c) * t;
        let root = (
            m.root_amplitude.0 * m.waveform.eval(w + m.root_phase.0),
            m.root_amplitude.1 * m.waveform.eval(w + m.root_phase.1),
        );
        forward_kinematics(&angles, root)
    }

    /// One normalized clip; `instance` selects the noise and placement draw.
    pub fn clip(&self, i: usize, c: usize, instance: usize, noise_px: f64) -> Result<MotionClip> {
        let mut rng = stream_rng(self.seed, 3, ((i as u64) << 40) ^ ((c as u64) << 20) ^ instance as u64);
        let center = (rng.random_range(200.0..312.0), rng.random_range(250.0..350.0));
        let zoom = rng.random_range(0.85..1.15);
        let jitter = Normal::new(0.0, noise_px.max(0.0)).expect("finite noise");
        let mut data = Tensor::zeros(2 * BODY25_JOINTS, self.frames);
        for t in 0..self.frames {
            let pose = self.pose(i, c, t as f64);
            for (j, (x, y)) in pose.iter().enumerate() {
                let (nx, ny) = if noise_px > 0.0 {
                    (jitter.sample(&mut rng), jitter.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                data[(j, t)] = center.0 + zoom * (x + nx);
                data[(BODY25_JOINTS + j, t)] = center.1 + zoom * (y + ny);
            }
        }
        normalize(&MotionClip::new(data, id_label(i), mc_label(c))?)
    }
}

fn stream_rng(seed: u64, purpose: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng.set_word_pos(u128::from(item) << 24);
    rng
}

fn dir(theta: f64) -> (f64, f64) {
    (theta.sin(), theta.cos())
}

fn add(p: (f64, f64), d: (f64, f64), len: f64) -> (f64, f64) {
    (p.0 + len * d.0, p.1 + len * d.1)
}

/// Image-right-to-left perpendicular of a direction (the figure's right
/// side when it faces the camera).
fn right_of(d: (f64, f64)) -> (f64, f64) {
    (d.1, -d.0)
}

/// Joint positions from the ten relative angles; `root` offsets the mid-hip.
pub fn forward_kinematics(angles: &[f64; N_DOF], root: (f64, f64)) -> [(f64, f64); BODY25_JOINTS] {
    let mut p = [(0.0, 0.0); BODY25_JOINTS];
    let spine_w = PI + angles[0];
    let spine = dir(spine_w);
    let side = right_of(spine);
    p[b::MID_HIP] = root;
    p[b::NECK] = add(root, spine, SPINE);

    let head = dir(spine_w + angles[1]);
    let head_side = right_of(head);
    p[b::NOSE] = add(p[b::NECK], head, NECK_TO_NOSE);
    let nose = p[b::NOSE];
    let face = |u: f64, v: f64| add(add(nose, head, u), head_side, v);
    p[b::R_EYE] = face(3.0, 5.0);
    p[b::L_EYE] = face(3.0, -5.0);
    p[b::R_EAR] = face(-1.0, 11.0);
    p[b::L_EAR] = face(-1.0, -11.0);

    let hang = spine_w + PI;
    p[b::R_SHOULDER] = add(p[b::NECK], side, SHOULDER_HALF);
    p[b::L_SHOULDER] = add(p[b::NECK], side, -SHOULDER_HALF);
    let r_upper = hang + angles[2];
    let l_upper = hang + angles[4];
    p[b::R_ELBOW] = add(p[b::R_SHOULDER], dir(r_upper), UPPER_ARM);
    p[b::R_WRIST] = add(p[b::R_ELBOW], dir(r_upper + angles[3]), FOREARM);
    p[b::L_ELBOW] = add(p[b::L_SHOULDER], dir(l_upper), UPPER_ARM);
    p[b::L_WRIST] = add(p[b::L_ELBOW], dir(l_upper + angles[5]), FOREARM);

    p[b::R_HIP] = add(root, side, HIP_HALF);
    p[b::L_HIP] = add(root, side, -HIP_HALF);
    let r_thigh = angles[6];
    let l_thigh = angles[8];
    p[b::R_KNEE] = add(p[b::R_HIP], dir(r_thigh), THIGH);
    let r_shin = dir(r_thigh + angles[7]);
    p[b::R_ANKLE] = add(p[b::R_KNEE], r_shin, SHIN);
    p[b::L_KNEE] = add(p[b::L_HIP], dir(l_thigh), THIGH);
    let l_shin = dir(l_thigh + angles[9]);
    p[b::L_ANKLE] = add(p[b::L_KNEE], l_shin, SHIN);

    let foot = |ankle: (f64, f64), shin: (f64, f64), outward: f64, u: f64, v: f64| {
        add(add(ankle, shin, u), right_of(shin), outward * v)
    };
    p[b::R_BIG_TOE] = foot(p[b::R_ANKLE], r_shin, 1.0, 10.0, 4.0);
    p[b::R_SMALL_TOE] = foot(p[b::R_ANKLE], r_shin, 1.0, 9.0, 9.0);
    p[b::R_HEEL] = foot(p[b::R_ANKLE], r_shin, 1.0, 4.0, -2.0);
    p[b::L_BIG_TOE] = foot(p[b::L_ANKLE], l_shin, -1.0, 10.0, 4.0);
    p[b::L_SMALL_TOE] = foot(p[b::L_ANKLE], l_shin, -1.0, 9.0, 9.0);
    p[b::L_HEEL] = foot(p[b::L_ANKLE], l_shin, -1.0, 4.0, -2.0);
    p
}

/// Grid of `clips_per_cell` clips for every (identity, content) pair.
pub fn synth_generate_with(config: &SynthConfig) -> Result<DatasetIndex> {
    let world = SynthWorld::new(config.n_ids, config.n_contents, config.frames, config.seed);
    let mut index = DatasetIndex::new();
    for i in 0..config.n_ids {
        for c in 0..config.n_contents {
            for k in 0..config.clips_per_cell {
                index.insert(world.clip(i, c, k, config.noise_px)?);
            }
        }
    }
    Ok(index)
}

/// Two clips per (identity, content) cell.
pub fn synth_generate(n_ids: usize, n_contents: usize, frames: usize, seed: u64) -> Result<DatasetIndex> {
    synth_generate_with(&SynthConfig::new(n_ids, n_contents, frames, seed))
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Recovers the ten relative joint angles of every frame of a BODY_25 clip.
pub fn joint_angles(clip: &MotionClip) -> Vec<[f64; N_DOF]> {
    let angle = |from: usize, to: usize, t: usize| {
        let (x0, y0) = clip.point(from, t);
        let (x1, y1) = clip.point(to, t);
        (x1 - x0).atan2(y1 - y0)
    };
    (0..clip.frames())
        .map(|t| {
            let spine = angle(b::MID_HIP, b::NECK, t);
            let r_upper = angle(b::R_SHOULDER, b::R_ELBOW, t);
            let l_upper = angle(b::L_SHOULDER, b::L_ELBOW, t);
            let r_thigh = angle(b::R_HIP, b::R_KNEE, t);
            let l_thigh = angle(b::L_HIP, b::L_KNEE, t);
            [
                wrap(spine - PI),
                wrap(angle(b::NECK, b::NOSE, t) - spine),
                wrap(r_upper - spine - PI),
                wrap(angle(b::R_ELBOW, b::R_WRIST, t) - r_upper),
                wrap(l_upper - spine - PI),
                wrap(angle(b::L_ELBOW, b::L_WRIST, t) - l_upper),
                wrap(r_thigh),
                wrap(angle(b::R_KNEE, b::R_ANKLE, t) - r_thigh),
                wrap(l_thigh),
                wrap(angle(b::L_KNEE, b::L_ANKLE, t) - l_thigh),
            ]
        })
        .collect()
}

/// Per-angle circular mean (posture) followed by per-angle spread
/// (amplitude): the identity-bearing statistics of the generator.
pub fn style_signature(clip: &MotionClip) -> Vec<f64> {
    let angles = joint_angles(clip);
    let n = angles.len() as f64;
    let mut means = Vec::with_capacity(N_DOF);
    let mut spreads = Vec::with_capacity(N_DOF);
    for d in 0..N_DOF {
        let (s, c) = angles
            .iter()
            .fold((0.0, 0.0), |(s, c), a| (s + a[d].sin(), c + a[d].cos()));
        let mean = s.atan2(c);
        let var = angles.iter().map(|a| wrap(a[d] - mean).powi(2)).sum::<f64>() / n;
        means.push(mean);
        spreads.push(var.sqrt());
    }
    means.extend(spreads);
    means
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = synth_generate(3, 2, 16, 9).unwrap();
        let b = synth_generate(3, 2, 16, 9).unwrap();
        let first = |idx: &DatasetIndex| idx.cell("id01", "mc01")[0].clone();
        assert_eq!(first(&a).data().data(), first(&b).data().data());
        assert_ne!(a.digest(), synth_generate(3, 2, 16, 10).unwrap().digest());
    }

    #[test]
    fn grid_size() {
        let index = synth_generate(6, 8, 64, 0).unwrap();
        assert_eq!(index.len(), 96);
        assert_eq!(index.ids().len(), 6);
        assert_eq!(index.contents().len(), 8);
        assert!(index.clips().all(|c| c.frames() == 64 && c.joints() == 25));
    }

    #[test]
    fn destyling_recovers_the_shared_content_trajectory() {
        let world = SynthWorld::new(4, 3, 64, 5);
        for c in 0..3 {
            for d in 0..N_DOF {
                for t in [0.0, 7.5, 31.0, 63.0] {
                    let base = world.base_angle(c, d, t);
                    for i in 0..4 {
                        assert!((world.destyled_angle(i, c, d, t) - base).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn bone_lengths_do_not_depend_on_identity() {
        let world = SynthWorld::new(5, 2, 64, 2);
        let len = |p: &[(f64, f64); 25], a: usize, bb: usize| {
            ((p[a].0 - p[bb].0).powi(2) + (p[a].1 - p[bb].1).powi(2)).sqrt()
        };
        for i in 0..5 {
            let p = world.pose(i, 1, 10.0);
            assert!((len(&p, b::R_SHOULDER, b::R_ELBOW) - UPPER_ARM).abs() < 1e-9);
            assert!((len(&p, b::L_KNEE, b::L_ANKLE) - SHIN).abs() < 1e-9);
        }
    }

    #[test]
    fn joint_angles_invert_forward_kinematics() {
        let world = SynthWorld::new(2, 2, 64, 4);
        let clip = world.clip(1, 0, 0, 0.0).unwrap();
        let recovered = joint_angles(&clip);
        for (t, frame) in recovered.iter().enumerate() {
            for d in 0..N_DOF {
                let truth = world.styled_angle(1, 0, d, t as f64);
                assert!(wrap(frame[d] - truth).abs() < 1e-9, "dof {d} frame {t}");
            }
        }
    }

    #[test]
    fn contents_have_distinct_rhythms() {
        let world = SynthWorld::new(1, 20, 64, 0);
        for a in 0..20 {
            for bb in (a + 1)..20 {
                let (x, y) = (&world.contents[a], &world.contents[bb]);
                assert!(x.waveform != y.waveform || x.frequency != y.frequency);
            }
        }
    }
}
