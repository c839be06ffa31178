//! Transformation kernels with explicit parameters.
//!
//! These are the deterministic halves of the stochastic transforms: the
//! caller draws the parameters (see [`super::apply_spec`]) and the kernel
//! maps a frame to a new, valid frame.

use crate::depth::{clamp_unit, DepthFrame, SegClass};
use crate::rng::Rng;

fn map_depth(frame: &DepthFrame, f: impl Fn(f64) -> f64) -> DepthFrame {
    DepthFrame::from_unclamped(
        frame.width(),
        frame.height(),
        frame.depth().iter().map(|&d| f(f64::from(d))),
        frame.mask().to_vec(),
    )
}

/// Integer translation plus rotation (degrees) about the image center,
/// nearest-neighbor resampled. Pixels with no source get depth 1 and
/// `Background`.
pub fn affine(frame: &DepthFrame, tx: i64, ty: i64, angle_deg: f64) -> DepthFrame {
    let (w, h) = (frame.width(), frame.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (s, c) = angle_deg.to_radians().sin_cos();
    let mut depth = vec![1.0f32; w * h];
    let mut mask = vec![SegClass::Background; w * h];
    for row in 0..h {
        for col in 0..w {
            // Inverse map: undo the translation, then the rotation.
            let x = col as f64 - tx as f64 - cx;
            let y = row as f64 - ty as f64 - cy;
            let sx = (c * x + s * y + cx).round();
            let sy = (-s * x + c * y + cy).round();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                let src = sy as usize * w + sx as usize;
                depth[row * w + col] = frame.depth()[src];
                mask[row * w + col] = frame.mask()[src];
            }
        }
    }
    DepthFrame::new(w, h, depth, mask).expect("affine preserves validity")
}

/// Axis-aligned rectangle filled with a constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoutRect {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
    pub value: f64,
}

impl CutoutRect {
    /// Sides uniform in `[10%, 30%]` of the image dimension, placed
    /// uniformly so the rectangle fits, fill value uniform in `[0, 1)`.
    pub fn sample(image_width: usize, image_height: usize, rng: &mut Rng) -> Self {
        let side = |dim: usize, rng: &mut Rng| {
            ((rng.range(0.1, 0.3) * dim as f64).round() as usize).clamp(1, dim)
        };
        let width = side(image_width, rng);
        let height = side(image_height, rng);
        let left = rng.below((image_width - width + 1) as u64) as usize;
        let top = rng.below((image_height - height + 1) as u64) as usize;
        let value = rng.uniform();
        Self {
            left,
            top,
            width,
            height,
            value,
        }
    }
}

pub fn cutout(frame: &DepthFrame, rects: &[CutoutRect]) -> DepthFrame {
    let w = frame.width();
    let (mut depth, mut mask) = frame.clone().into_parts();
    for r in rects {
        let v = clamp_unit(r.value);
        for row in r.top..(r.top + r.height).min(frame.height()) {
            for col in r.left..(r.left + r.width).min(w) {
                depth[row * w + col] = v;
                mask[row * w + col] = SegClass::Background;
            }
        }
    }
    DepthFrame::new(w, frame.height(), depth, mask).expect("cutout preserves validity")
}

pub fn invert(frame: &DepthFrame) -> DepthFrame {
    map_depth(frame, |x| 1.0 - x)
}

/// Keeps the top `bits` bits of the 8-bit quantized value.
pub fn posterize(frame: &DepthFrame, bits: u32) -> DepthFrame {
    assert!((1..=8).contains(&bits));
    let keep: u32 = !((1u32 << (8 - bits)) - 1);
    map_depth(frame, |x| {
        let q = ((x * 255.0).floor() as u32).min(255);
        f64::from(q & keep) / 255.0
    })
}

pub fn scale(frame: &DepthFrame, factor: f64) -> DepthFrame {
    map_depth(frame, |x| x * factor)
}

/// `x + f * (x - S)` where `S` is the 3x3 smoothing filter
/// `[[1,1,1],[1,5,1],[1,1,1]] / 13` with replicated borders.
pub fn sharpness(frame: &DepthFrame, factor: f64) -> DepthFrame {
    let (w, h) = (frame.width() as isize, frame.height() as isize);
    let d = frame.depth();
    let at =
        |r: isize, c: isize| f64::from(d[(r.clamp(0, h - 1) * w + c.clamp(0, w - 1)) as usize]);
    let mut out = Vec::with_capacity(d.len());
    for r in 0..h {
        for c in 0..w {
            let mut s = 4.0 * at(r, c);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    s += at(r + dr, c + dc);
                }
            }
            let x = at(r, c);
            out.push(x + factor * (x - s / 13.0));
        }
    }
    DepthFrame::from_unclamped(frame.width(), frame.height(), out, frame.mask().to_vec())
}

/// Adds i.i.d. `U[-m, m)` to each pixel (row-major draws).
pub fn white_noise(frame: &DepthFrame, magnitude: f64, rng: &mut Rng) -> DepthFrame {
    let noisy: Vec<f64> = frame
        .depth()
        .iter()
        .map(|&x| f64::from(x) + rng.range(-magnitude, magnitude))
        .collect();
    DepthFrame::from_unclamped(frame.width(), frame.height(), noisy, frame.mask().to_vec())
}

/// Sets each pixel to 1 with probability `rate` (one draw per pixel).
pub fn salt_noise(frame: &DepthFrame, rate: f64, rng: &mut Rng) -> DepthFrame {
    let (mut depth, mask) = frame.clone().into_parts();
    for d in depth.iter_mut() {
        if rng.uniform() < rate {
            *d = 1.0;
        }
    }
    DepthFrame::new(frame.width(), frame.height(), depth, mask).expect("salt preserves validity")
}

/// Pixels with a 4-neighbor of a different class.
pub fn class_boundaries(frame: &DepthFrame) -> Vec<bool> {
    let (w, h) = (frame.width(), frame.height());
    let m = frame.mask();
    let mut out = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let k = m[r * w + c];
            let differs = (r > 0 && m[(r - 1) * w + c] != k)
                || (r + 1 < h && m[(r + 1) * w + c] != k)
                || (c > 0 && m[r * w + c - 1] != k)
                || (c + 1 < w && m[r * w + c + 1] != k);
            out[r * w + c] = differs;
        }
    }
    out
}

/// Chebyshev dilation of a boolean image.
pub fn dilate(marks: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return marks.to_vec();
    }
    // Separable: a square structuring element is a row pass then a column pass.
    let mut rows = vec![false; marks.len()];
    for r in 0..height {
        for c in 0..width {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(width - 1);
            rows[r * width + c] = (lo..=hi).any(|k| marks[r * width + k]);
        }
    }
    let mut out = vec![false; marks.len()];
    for r in 0..height {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(height - 1);
        for c in 0..width {
            out[r * width + c] = (lo..=hi).any(|k| rows[k * width + c]);
        }
    }
    out
}

/// Erases every pixel within Chebyshev `radius` of a class boundary.
pub fn boundary_noise(frame: &DepthFrame, radius: usize) -> DepthFrame {
    let (w, h) = (frame.width(), frame.height());
    let hit = dilate(&class_boundaries(frame), w, h, radius);
    erase_where(frame, |i| hit[i])
}

/// Erases every pixel of `class`.
pub fn erase_class(frame: &DepthFrame, class: SegClass) -> DepthFrame {
    erase_where(frame, |i| frame.mask()[i] == class)
}

fn erase_where(frame: &DepthFrame, pred: impl Fn(usize) -> bool) -> DepthFrame {
    let (mut depth, mut mask) = frame.clone().into_parts();
    for i in 0..depth.len() {
        if pred(i) {
            depth[i] = 1.0;
            mask[i] = SegClass::Background;
        }
    }
    DepthFrame::new(frame.width(), frame.height(), depth, mask).expect("erase preserves validity")
}
