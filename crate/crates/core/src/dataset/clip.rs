use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::raw::{RawSequence, DEFAULT_FPS};
use crate::error::{Error, Result};
use crate::skeleton::{body25, BODY25_JOINTS};
use crate::tensor::Tensor;

pub const DEFAULT_CLIP_FRAMES: usize = 64;

const CONTAINER_MAGIC: &str = "IDMOTION-CLIP 1";

/// A `2J × T` keypoint array: rows `x_0..x_{J-1}` then `y_0..y_{J-1}`,
/// one column per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    data: Tensor,
    pub id_label: String,
    pub mc_label: String,
    pub fps: f64,
}

impl MotionClip {
    pub fn new(data: Tensor, id_label: impl Into<String>, mc_label: impl Into<String>) -> Result<Self> {
        if data.rows() == 0 || data.rows() % 2 != 0 {
            return Err(Error::Config(format!(
                "clip needs an even, non-zero row count (2J), got {}",
                data.rows()
            )));
        }
        if !data.all_finite() {
            return Err(Error::Config("clip contains non-finite coordinates".into()));
        }
        Ok(Self {
            data,
            id_label: id_label.into(),
            mc_label: mc_label.into(),
            fps: DEFAULT_FPS,
        })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn into_data(self) -> Tensor {
        self.data
    }

    pub fn joints(&self) -> usize {
        self.data.rows() / 2
    }

    pub fn frames(&self) -> usize {
        self.data.cols()
    }

    pub fn point(&self, joint: usize, frame: usize) -> (f64, f64) {
        (self.data[(joint, frame)], self.data[(self.joints() + joint, frame)])
    }

    /// Same labels, new coordinates.
    pub fn with_data(&self, data: Tensor) -> Result<Self> {
        let mut clip = Self::new(data, self.id_label.clone(), self.mc_label.clone())?;
        clip.fps = self.fps;
        Ok(clip)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ContainerHeader {
            joints: self.joints(),
            frames: self.frames(),
            fps: self.fps,
            id_label: self.id_label.clone(),
            mc_label: Some(self.mc_label.clone()),
        };
        write_container(path, &header, &self.data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data) = read_container(path)?;
        let mut clip = Self::new(data, header.id_label, header.mc_label.unwrap_or_default())?;
        clip.fps = header.fps;
        Ok(clip)
    }
}

/// Centers the clip on the temporal mean of the mid-hip joint and divides
/// by the temporal mean torso (neck to mid-hip) length.
pub fn normalize(clip: &MotionClip) -> Result<MotionClip> {
    if clip.joints() != BODY25_JOINTS {
        return Err(Error::Arity {
            expected: BODY25_JOINTS,
            found: clip.joints(),
        });
    }
    let t_len = clip.frames() as f64;
    let (mut cx, mut cy, mut torso) = (0.0, 0.0, 0.0);
    for t in 0..clip.frames() {
        let (hx, hy) = clip.point(body25::MID_HIP, t);
        let (nx, ny) = clip.point(body25::NECK, t);
        cx += hx;
        cy += hy;
        torso += ((nx - hx).powi(2) + (ny - hy).powi(2)).sqrt();
    }
    cx /= t_len;
    cy /= t_len;
    torso /= t_len;
    if !(torso > 0.0 && torso.is_finite()) {
        return Err(Error::DegeneratePose(format!(
            "mean torso length {torso} for clip {}/{}",
            clip.id_label, clip.mc_label
        )));
    }
    let j = clip.joints();
    let mut data = clip.data().clone();
    for r in 0..2 * j {
        let center = if r < j { cx } else { cy };
        data.row_mut(r).iter_mut().for_each(|v| *v = (*v - center) / torso);
    }
    clip.with_data(data)
}

/// Cuts a padded sequence into consecutive, non-overlapping windows of
/// `frames` frames and normalizes each. The remainder is dropped.
///
/// Window `k` is labelled `seg{k:04}`, prefixed by the sequence's content
/// id when present, so aligned performances of one choreography share
/// content labels.
pub fn trim_clips(seq: &RawSequence, frames: usize) -> Result<Vec<MotionClip>> {
    if frames == 0 {
        return Err(Error::Config("clip length must be positive".into()));
    }
    let count = seq.frames.len() / frames;
    let mut clips = Vec::with_capacity(count);
    for k in 0..count {
        let mut data = Tensor::zeros(2 * BODY25_JOINTS, frames);
        for (t, frame) in seq.frames[k * frames..(k + 1) * frames].iter().enumerate() {
            for (j, kp) in frame.iter().enumerate() {
                data[(j, t)] = kp.x;
                data[(BODY25_JOINTS + j, t)] = kp.y;
            }
        }
        let mc_label = match &seq.content_id {
            Some(c) => format!("{c}#seg{k:04}"),
            None => format!("seg{k:04}"),
        };
        let mut clip = MotionClip::new(data, seq.subject_id.clone(), mc_label)?;
        clip.fps = seq.fps;
        clips.push(normalize(&clip)?);
    }
    Ok(clips)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub joints: usize,
    pub frames: usize,
    pub fps: f64,
    pub id_label: String,
    pub mc_label: Option<String>,
}

/// Writes the text clip container:
///
/// ```text
/// IDMOTION-CLIP 1
/// joints <J>
/// frames <T>
/// fps <fps>
/// id_label <label>
/// mc_label [<label>]
/// data
/// <2J lines of T decimal numbers>
/// ```
pub fn write_container(path: &Path, header: &ContainerHeader, data: &Tensor) -> Result<()> {
    for label in std::iter::once(&header.id_label).chain(header.mc_label.as_ref()) {
        if label.contains(['\n', '\r']) {
            return Err(Error::Config(format!("label {label:?} contains a line break")));
        }
    }
    assert_eq!(data.shape(), (2 * header.joints, header.frames));
    let mut out = String::new();
    writeln!(out, "{CONTAINER_MAGIC}").unwrap();
    writeln!(out, "joints {}", header.joints).unwrap();
    writeln!(out, "frames {}", header.frames).unwrap();
    writeln!(out, "fps {}", header.fps).unwrap();
    writeln!(out, "id_label {}", header.id_label).unwrap();
    match &header.mc_label {
        Some(l) => writeln!(out, "mc_label {l}").unwrap(),
        None => writeln!(out, "mc_label").unwrap(),
    }
    writeln!(out, "data").unwrap();
    for r in 0..data.rows() {
        let line: Vec<String> = data.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<(ContainerHeader, Tensor)> {
    let text = fs::read_to_string(path)?;
    let source_name = path.display().to_string();
    let err = |frame: usize, reason: String| Error::Format {
        source_name: source_name.clone(),
        frame,
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some(CONTAINER_MAGIC) {
        return Err(err(0, "missing clip container header".into()));
    }
    let mut field = |key: &str| -> Result<String> {
        let line = lines
            .next()
            .ok_or_else(|| err(0, format!("missing `{key}` header line")))?;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| err(0, format!("expected `{key}`, found {line:?}")))?;
        Ok(rest.strip_prefix(' ').unwrap_or(rest).to_string())
    };
    let parse_usize = |key: &str, v: String| {
        v.parse::<usize>()
            .map_err(|e| err(0, format!("bad {key} {v:?}: {e}")))
    };
    let joints = parse_usize("joints", field("joints")?)?;
    let frames = parse_usize("frames", field("frames")?)?;
    let fps_text = field("fps")?;
    let fps: f64 = fps_text
        .parse()
        .map_err(|e| err(0, format!("bad fps {fps_text:?}: {e}")))?;
    let id_label = field("id_label")?;
    let mc = field("mc_label")?;
    let mc_label = (!mc.is_empty()).then_some(mc);
    field("data")?;
    let mut data = Tensor::zeros(2 * joints, frames);
    for r in 0..2 * joints {
        let line = lines
            .next()
            .ok_or_else(|| err(0, format!("missing coordinate row {r}")))?;
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != frames {
            let frame = values.len().min(frames);
            return Err(err(frame, format!("row {r} has {} values, expected {frames}", values.len())));
        }
        for (t, v) in values.iter().enumerate() {
            data[(r, t)] = v
                .parse()
                .map_err(|e| err(t, format!("row {r}: bad number {v:?}: {e}")))?;
        }
    }
    Ok((
        ContainerHeader {
            joints,
            frames,
            fps,
            id_label,
            mc_label,
        },
        data,
    ))
}
