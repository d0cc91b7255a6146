//! Per-frame keypoint sequences straight out of a pose estimator, and the
//! cleaning/padding passes that make them usable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;

use super::clip::{read_container, write_container, ContainerHeader};
use crate::error::{Error, Result};
use crate::skeleton::BODY25_JOINTS;
use crate::tensor::Tensor;

/// Frames with more missing joints than this are dropped (a third of 25).
pub const MAX_MISSING_JOINTS: usize = BODY25_JOINTS / 3;

/// Half-width of the temporal window used to fill a missing joint.
pub const PAD_WINDOW: usize = 5;

pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_missing(&self) -> bool {
        self.confidence <= 0.0
    }
}

pub type Frame = [Keypoint; BODY25_JOINTS];

#[derive(Clone, Debug, PartialEq)]
pub struct RawSequence {
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub subject_id: String,
    pub content_id: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RawFormat {
    /// A directory of OpenPose `*_keypoints.json` files, one per frame.
    OpenposeJsonDir,
    /// A single clip container file.
    ClipContainer,
}

impl std::str::FromStr for RawFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "openpose_json_dir" => Ok(Self::OpenposeJsonDir),
            "clip_container" => Ok(Self::ClipContainer),
            other => Err(Error::Config(format!(
                "unknown input format `{other}` (expected openpose_json_dir or clip_container)"
            ))),
        }
    }
}

impl RawSequence {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            frames: Vec::new(),
            fps: DEFAULT_FPS,
            subject_id: subject_id.into(),
            content_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn missing_count(frame: &Frame) -> usize {
        frame.iter().filter(|k| k.is_missing()).count()
    }

    pub fn total_missing(&self) -> usize {
        self.frames.iter().map(Self::missing_count).sum()
    }
}

#[derive(Deserialize)]
struct OpenposeFrame {
    #[serde(default)]
    people: Vec<OpenposePerson>,
}

#[derive(Deserialize)]
struct OpenposePerson {
    pose_keypoints_2d: Vec<f64>,
}

pub fn load_raw_sequence(path: &Path, format: RawFormat) -> Result<RawSequence> {
    match format {
        RawFormat::OpenposeJsonDir => load_openpose_dir(path),
        RawFormat::ClipContainer => load_container_as_raw(path),
    }
}

pub fn save_raw_sequence(seq: &RawSequence, path: &Path, format: RawFormat) -> Result<()> {
    match format {
        RawFormat::OpenposeJsonDir => save_openpose_dir(seq, path),
        RawFormat::ClipContainer => save_raw_as_container(seq, path),
    }
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_openpose_dir(dir: &Path) -> Result<RawSequence> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyInput(dir.to_path_buf()));
    }
    let subject = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut seq = RawSequence::new(subject);
    for (index, file) in files.iter().enumerate() {
        let source_name = file.display().to_string();
        let format_err = |reason: String| Error::Format {
            source_name: source_name.clone(),
            frame: index,
            reason,
        };
        let text = fs::read_to_string(file)?;
        let parsed: OpenposeFrame =
            serde_json::from_str(&text).map_err(|e| format_err(e.to_string()))?;
        let frame = match parsed.people.first() {
            None => [Keypoint::default(); BODY25_JOINTS],
            Some(person) => {
                frame_from_flat(&person.pose_keypoints_2d).map_err(format_err)?
            }
        };
        seq.frames.push(frame);
    }
    Ok(seq)
}

/// Builds a frame from 75 numbers `[x, y, c] × 25`; keypoints at the
/// origin are flagged missing.
pub fn frame_from_flat(values: &[f64]) -> std::result::Result<Frame, String> {
    if values.len() != 3 * BODY25_JOINTS {
        return Err(format!(
            "expected {} numbers, found {}",
            3 * BODY25_JOINTS,
            values.len()
        ));
    }
    let mut frame = [Keypoint::default(); BODY25_JOINTS];
    for (j, kp) in frame.iter_mut().enumerate() {
        let (x, y, c) = (values[3 * j], values[3 * j + 1], values[3 * j + 2]);
        if !(x.is_finite() && y.is_finite() && c.is_finite()) {
            return Err(format!("joint {j} has a non-finite value"));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(format!("joint {j} confidence {c} outside [0, 1]"));
        }
        let confidence = if x == 0.0 && y == 0.0 { 0.0 } else { c };
        *kp = Keypoint::new(x, y, confidence);
    }
    Ok(frame)
}

fn save_openpose_dir(seq: &RawSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, frame) in seq.frames.iter().enumerate() {
        let flat: Vec<f64> = frame
            .iter()
            .flat_map(|k| [k.x, k.y, k.confidence])
            .collect();
        let doc = json!({
            "version": 1.3,
            "people": [{ "person_id": [-1], "pose_keypoints_2d": flat }],
        });
        let name = format!("frame_{t:012}_keypoints.json");
        fs::write(dir.join(name), serde_json::to_string(&doc)?)?;
    }
    Ok(())
}

fn load_container_as_raw(path: &Path) -> Result<RawSequence> {
    let (header, data) = read_container(path)?;
    if header.joints != BODY25_JOINTS {
        return Err(Error::Arity {
            expected: BODY25_JOINTS,
            found: header.joints,
        });
    }
    let mut seq = RawSequence::new(header.id_label);
    seq.fps = header.fps;
    seq.content_id = header.mc_label;
    for t in 0..data.cols() {
        let mut frame = [Keypoint::default(); BODY25_JOINTS];
        for (j, kp) in frame.iter_mut().enumerate() {
            let (x, y) = (data[(j, t)], data[(BODY25_JOINTS + j, t)]);
            let c = if x == 0.0 && y == 0.0 { 0.0 } else { 1.0 };
            *kp = Keypoint::new(x, y, c);
        }
        seq.frames.push(frame);
    }
    Ok(seq)
}

fn save_raw_as_container(seq: &RawSequence, path: &Path) -> Result<()> {
    let mut data = Tensor::zeros(2 * BODY25_JOINTS, seq.frames.len());
    for (t, frame) in seq.frames.iter().enumerate() {
        for (j, kp) in frame.iter().enumerate() {
            data[(j, t)] = kp.x;
            data[(BODY25_JOINTS + j, t)] = kp.y;
        }
    }
    let header = ContainerHeader {
        joints: BODY25_JOINTS,
        frames: seq.frames.len(),
        fps: seq.fps,
        id_label: seq.subject_id.clone(),
        mc_label: seq.content_id.clone(),
    };
    write_container(path, &header, &data)
}

/// Drops frames with more than a third of the joints missing.
pub fn clean_frames(seq: &RawSequence) -> RawSequence {
    RawSequence {
        frames: seq
            .frames
            .iter()
            .filter(|f| RawSequence::missing_count(f) <= MAX_MISSING_JOINTS)
            .copied()
            .collect(),
        ..seq.clone()
    }
}

/// Fills every missing joint from the same joint in the surrounding frames.
///
/// The fill is the confidence-weighted mean over frames `t-5..=t+5` (other
/// than `t`) where the joint was detected; with no detection in that window
/// the nearest detection anywhere in the sequence is copied (earlier frame
/// on ties). Detected joints are never modified.
pub fn pad_missing(seq: &RawSequence) -> Result<RawSequence> {
    let n = seq.frames.len();
    let mut out = seq.clone();
    for t in 0..n {
        for j in 0..BODY25_JOINTS {
            if !seq.frames[t][j].is_missing() {
                continue;
            }
            let lo = t.saturating_sub(PAD_WINDOW);
            let hi = (t + PAD_WINDOW).min(n - 1);
            let (mut sx, mut sy, mut sw, mut count) = (0.0, 0.0, 0.0, 0usize);
            for s in (lo..=hi).filter(|&s| s != t) {
                let kp = seq.frames[s][j];
                if !kp.is_missing() {
                    sx += kp.confidence * kp.x;
                    sy += kp.confidence * kp.y;
                    sw += kp.confidence;
                    count += 1;
                }
            }
            out.frames[t][j] = if count > 0 {
                Keypoint::new(sx / sw, sy / sw, sw / count as f64)
            } else {
                nearest_present(seq, t, j).ok_or(Error::UnreconstructableJoint { frame: t, joint: j })?
            };
        }
    }
    Ok(out)
}

fn nearest_present(seq: &RawSequence, t: usize, j: usize) -> Option<Keypoint> {
    let n = seq.frames.len();
    (1..n).find_map(|d| {
        let before = t.checked_sub(d).map(|s| seq.frames[s][j]);
        let after = (t + d < n).then(|| seq.frames[t + d][j]);
        before
            .filter(|k| !k.is_missing())
            .or(after.filter(|k| !k.is_missing()))
    })
}
