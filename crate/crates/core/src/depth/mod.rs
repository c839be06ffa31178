//! Depth frames, labeled samples and datasets.
//!
//! A [`DepthFrame`] stores normalized depth (`z / Z_MAX`, clamped to `[0, 1]`)
//! together with a per-pixel segmentation mask. Frames are immutable once
//! built; every constructor validates the invariants so downstream code never
//! sees out-of-range depth or a malformed mask.

mod io;
mod pgm;

pub use io::{
    decode_dataset, encode_dataset, load_dataset, save_dataset, write_atomic, DatasetError,
    FORMAT_VERSION, MAGIC,
};
pub use pgm::{encode_pgm, export_pgm};

use std::fmt;

/// Depth normalization range in meters.
pub const Z_MAX: f64 = 2.0;

/// Segmentation class of a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SegClass {
    /// Rays that hit nothing; also the fill class for erased pixels.
    Background = 0,
    Table = 1,
    Wall = 2,
    Cube = 3,
    Effector = 4,
}

impl SegClass {
    pub const ALL: [SegClass; 5] = [
        SegClass::Background,
        SegClass::Table,
        SegClass::Wall,
        SegClass::Cube,
        SegClass::Effector,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }
}

/// First invariant violated by raw frame data.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FrameViolation {
    #[error("size mismatch: {width}x{height} frame needs {expected} entries, got {depth_len} depth and {mask_len} mask")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        depth_len: usize,
        mask_len: usize,
    },
    #[error("depth out of range at index {index}: {value}")]
    DepthOutOfRange { index: usize, value: f32 },
    #[error("invalid mask class at index {index}: {value}")]
    InvalidClass { index: usize, value: u8 },
}

/// Checks raw frame buffers against the frame invariants.
///
/// Total over any input: reports the first violation in the order size,
/// depth range (NaN counts as out of range), mask class.
pub fn validate_frame(
    width: usize,
    height: usize,
    depth: &[f32],
    mask: &[u8],
) -> Result<(), FrameViolation> {
    let expected = width.saturating_mul(height);
    if depth.len() != expected || mask.len() != expected {
        return Err(FrameViolation::SizeMismatch {
            width,
            height,
            expected,
            depth_len: depth.len(),
            mask_len: mask.len(),
        });
    }
    if let Some((index, &value)) = depth
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(FrameViolation::DepthOutOfRange { index, value });
    }
    if let Some((index, &value)) = mask
        .iter()
        .enumerate()
        .find(|(_, v)| SegClass::from_u8(**v).is_none())
    {
        return Err(FrameViolation::InvalidClass { index, value });
    }
    Ok(())
}

/// Normalized depth map with a segmentation mask, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    width: usize,
    height: usize,
    depth: Vec<f32>,
    mask: Vec<SegClass>,
}

impl DepthFrame {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f32>,
        mask: Vec<SegClass>,
    ) -> Result<Self, FrameViolation> {
        let raw: Vec<u8> = mask.iter().map(|c| *c as u8).collect();
        validate_frame(width, height, &depth, &raw)?;
        Ok(Self {
            width,
            height,
            depth,
            mask,
        })
    }

    pub fn from_raw(
        width: usize,
        height: usize,
        depth: Vec<f32>,
        mask: &[u8],
    ) -> Result<Self, FrameViolation> {
        validate_frame(width, height, &depth, mask)?;
        let mask = mask
            .iter()
            .map(|v| SegClass::from_u8(*v).expect("validated"))
            .collect();
        Ok(Self {
            width,
            height,
            depth,
            mask,
        })
    }

    /// Constant-depth frame with a uniform class.
    pub fn filled(width: usize, height: usize, depth: f32, class: SegClass) -> Self {
        Self::new(
            width,
            height,
            vec![depth; width * height],
            vec![class; width * height],
        )
        .expect("filled frame must be valid")
    }

    /// Builds a frame from values that may fall outside `[0, 1]`; they are
    /// clamped (NaN maps to 1.0, i.e. "far").
    pub fn from_unclamped(
        width: usize,
        height: usize,
        depth: impl IntoIterator<Item = f64>,
        mask: Vec<SegClass>,
    ) -> Self {
        let depth: Vec<f32> = depth.into_iter().map(clamp_unit).collect();
        Self::new(width, height, depth, mask).expect("clamped frame must be valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn mask(&self) -> &[SegClass] {
        &self.mask
    }

    pub fn depth_at(&self, row: usize, col: usize) -> f32 {
        self.depth[row * self.width + col]
    }

    pub fn class_at(&self, row: usize, col: usize) -> SegClass {
        self.mask[row * self.width + col]
    }

    pub fn into_parts(self) -> (Vec<f32>, Vec<SegClass>) {
        (self.depth, self.mask)
    }

    /// Same depth, every mask entry replaced by `Background`.
    pub fn without_mask(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            depth: self.depth.clone(),
            mask: vec![SegClass::Background; self.depth.len()],
        }
    }
}

/// Clamps into `[0, 1]` and narrows to `f32`. NaN becomes 1.0.
pub fn clamp_unit(v: f64) -> f32 {
    if v.is_nan() {
        1.0
    } else {
        v.clamp(0.0, 1.0) as f32
    }
}

/// A frame plus the world-frame cube center it was rendered from.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame {
    pub frame: DepthFrame,
    /// Meters, robot/world base frame.
    pub cube_position: [f64; 3],
}

/// Which generator produced a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Domain {
    Sim = 0,
    PseudoReal = 1,
}

impl Domain {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Domain::Sim),
            1 => Some(Domain::PseudoReal),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Sim => f.write_str("sim"),
            Domain::PseudoReal => f.write_str("pseudoreal"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DatasetInvariant {
    #[error("dataset has no items")]
    Empty,
    #[error("item {index} is {width}x{height}, expected {expected_width}x{expected_height}")]
    ShapeMismatch {
        index: usize,
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
}

/// Non-empty collection of same-sized labeled frames from one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    items: Vec<LabeledFrame>,
    domain: Domain,
    seed: u64,
}

impl Dataset {
    pub fn new(
        items: Vec<LabeledFrame>,
        domain: Domain,
        seed: u64,
    ) -> Result<Self, DatasetInvariant> {
        let first = items.first().ok_or(DatasetInvariant::Empty)?;
        let (w, h) = (first.frame.width(), first.frame.height());
        for (index, item) in items.iter().enumerate() {
            if item.frame.width() != w || item.frame.height() != h {
                return Err(DatasetInvariant::ShapeMismatch {
                    index,
                    width: item.frame.width(),
                    height: item.frame.height(),
                    expected_width: w,
                    expected_height: h,
                });
            }
        }
        Ok(Self {
            items,
            domain,
            seed,
        })
    }

    pub fn items(&self) -> &[LabeledFrame] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.items[0].frame.width()
    }

    pub fn height(&self) -> usize {
        self.items[0].frame.height()
    }
}
