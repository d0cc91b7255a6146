//! Stick-figure frames: the BODY_25 limb graph drawn as colored segments.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::dataset::MotionClip;
use crate::error::{Error, Result};
use crate::skeleton::{BODY25_JOINTS, BODY25_LIMBS};

pub const DEFAULT_SIZE: u32 = 512;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const JOINT: Rgb<u8> = Rgb([40, 40, 40]);

/// Fixed per-limb color, evenly spaced in hue.
pub fn limb_color(limb: usize) -> Rgb<u8> {
    let h = (limb as f64 / BODY25_LIMBS.len() as f64) * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (v * 220.0).round() as u8;
    Rgb([c(r), c(g), c(b)])
}

/// Maps clip coordinates to pixels with one transform for the whole clip,
/// so the figure does not jump between frames.
#[derive(Clone, Copy, Debug)]
struct Viewport {
    scale: f64,
    offset: (f64, f64),
}

impl Viewport {
    fn fit(clip: &MotionClip, size: u32) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for t in 0..clip.frames() {
            for j in 0..clip.joints() {
                let (x, y) = clip.point(j, t);
                lo = (lo.0.min(x), lo.1.min(y));
                hi = (hi.0.max(x), hi.1.max(y));
            }
        }
        let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-9);
        let usable = size as f64 * 0.9;
        let scale = usable / span;
        let center = ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0);
        let mid = size as f64 / 2.0;
        Self {
            scale,
            offset: (mid - center.0 * scale, mid - center.1 * scale),
        }
    }

    fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (x * self.scale + self.offset.0, y * self.scale + self.offset.1)
    }
}

fn disc(img: &mut RgbImage, (cx, cy): (f64, f64), radius: f64, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = radius.ceil() as i64;
    let (px, py) = (cx.round() as i64, cy.round() as i64);
    for y in (py - r).max(0)..=(py + r).min(h - 1) {
        for x in (px - r).max(0)..=(px + r).min(w - 1) {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            if dx * dx + dy * dy <= radius * radius {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), width: f64, color: Rgb<u8>) {
    let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let steps = (len.ceil() as usize).max(1);
    for s in 0..=steps {
        let u = s as f64 / steps as f64;
        disc(img, (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1)), width / 2.0, color);
    }
}

pub fn render_frame(clip: &MotionClip, frame: usize, size: u32) -> Result<RgbImage> {
    if clip.joints() != BODY25_JOINTS {
        return Err(Error::Arity {
            expected: BODY25_JOINTS,
            found: clip.joints(),
        });
    }
    if frame >= clip.frames() || size == 0 {
        return Err(Error::Config(format!("frame {frame} or size {size} out of range")));
    }
    Ok(draw(clip, frame, size, &Viewport::fit(clip, size)))
}

fn draw(clip: &MotionClip, frame: usize, size: u32, view: &Viewport) -> RgbImage {
    let mut img = RgbImage::from_pixel(size, size, BACKGROUND);
    let width = (size as f64 / 128.0).max(1.0);
    let p = |j: usize| view.apply(clip.point(j, frame));
    for (i, &(a, b)) in BODY25_LIMBS.iter().enumerate() {
        segment(&mut img, p(a), p(b), width, limb_color(i));
    }
    for j in 0..BODY25_JOINTS {
        disc(&mut img, p(j), width, JOINT);
    }
    img
}

/// Writes `frame_0000.png`, `frame_0001.png`, … into `dir`.
pub fn render_clip(clip: &MotionClip, dir: &Path, size: u32) -> Result<Vec<PathBuf>> {
    render_frame(clip, 0, size)?;
    std::fs::create_dir_all(dir)?;
    let view = Viewport::fit(clip, size);
    (0..clip.frames())
        .map(|t| {
            let path = dir.join(format!("frame_{t:04}.png"));
            draw(clip, t, size, &view).save(&path)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::synth_generate;

    #[test]
    fn one_png_per_frame() {
        let clip = synth_generate(1, 1, 64, 0).unwrap().clips().next().unwrap().clone();
        let dir = tempfile::tempdir().unwrap();
        let files = render_clip(&clip, dir.path(), 64).unwrap();
        assert_eq!(files.len(), 64);
        let img = image::open(&files[10]).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (64, 64));
        assert!(img.pixels().any(|p| *p != BACKGROUND));
    }

    #[test]
    fn limb_colors_are_distinct() {
        let colors: std::collections::HashSet<[u8; 3]> = (0..BODY25_LIMBS.len()).map(|i| limb_color(i).0).collect();
        assert_eq!(colors.len(), BODY25_LIMBS.len());
    }
}
