//! Binary dataset files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "DAUG"        4 bytes magic
//! version       u16
//! domain        u8   (0 = sim, 1 = pseudoreal)
//! seed          u64
//! count         u32
//! width         u16
//! height        u16
//! count x {
//!     cube position   3 x f64
//!     depth           width*height x f32
//!     mask            width*height x u8
//! }
//! ```

use super::{validate_frame, Dataset, DepthFrame, Domain, FrameViolation, LabeledFrame};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DAUG";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 4 + 2 + 2;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("length mismatch: header implies {expected} bytes, file has {actual}")]
    Length { expected: usize, actual: usize },
    #[error("dataset cannot be encoded: {0}")]
    Unencodable(String),
}

impl DatasetError {
    fn format(offset: usize, message: impl Into<String>) -> Self {
        DatasetError::Format {
            offset,
            message: message.into(),
        }
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>, DatasetError> {
    let (w, h) = (dataset.width(), dataset.height());
    let width = u16::try_from(w).map_err(|_| DatasetError::Unencodable(format!("width {w}")))?;
    let height = u16::try_from(h).map_err(|_| DatasetError::Unencodable(format!("height {h}")))?;
    let count = u32::try_from(dataset.len())
        .map_err(|_| DatasetError::Unencodable(format!("{} items", dataset.len())))?;

    let px = w * h;
    let mut out = Vec::with_capacity(HEADER_LEN + dataset.len() * (24 + px * 5));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(dataset.domain() as u8);
    out.extend_from_slice(&dataset.seed().to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    for item in dataset.items() {
        for c in item.cube_position {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for d in item.frame.depth() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend(item.frame.mask().iter().map(|c| *c as u8));
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DatasetError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DatasetError::format(0, "bad magic, expected \"DAUG\""));
    }
    if bytes.len() < HEADER_LEN {
        return Err(DatasetError::Length {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let version = u16_at(4);
    if version != FORMAT_VERSION {
        return Err(DatasetError::format(
            4,
            format!("unsupported version {version}"),
        ));
    }
    let domain = Domain::from_u8(bytes[6])
        .ok_or_else(|| DatasetError::format(6, format!("unknown domain tag {}", bytes[6])))?;
    let seed = u64::from_le_bytes(bytes[7..15].try_into().unwrap());
    let count = u32::from_le_bytes(bytes[15..19].try_into().unwrap()) as usize;
    let width = u16_at(19) as usize;
    let height = u16_at(21) as usize;
    if count == 0 {
        return Err(DatasetError::format(15, "item count is zero"));
    }
    let px = width * height;
    let item_len = 24 + px * 5;
    let expected = HEADER_LEN + count * item_len;
    if bytes.len() != expected {
        return Err(DatasetError::Length {
            expected,
            actual: bytes.len(),
        });
    }

    let mut items = Vec::with_capacity(count);
    let mut offset = HEADER_LEN;
    for _ in 0..count {
        let mut cube_position = [0.0f64; 3];
        for (k, c) in cube_position.iter_mut().enumerate() {
            let o = offset + 8 * k;
            *c = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
            if !c.is_finite() {
                return Err(DatasetError::format(o, "non-finite cube coordinate"));
            }
        }
        let depth_start = offset + 24;
        let depth: Vec<f32> = bytes[depth_start..depth_start + 4 * px]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let mask_start = depth_start + 4 * px;
        let mask = &bytes[mask_start..mask_start + px];
        if let Err(v) = validate_frame(width, height, &depth, mask) {
            let at = match v {
                FrameViolation::DepthOutOfRange { index, .. } => depth_start + 4 * index,
                FrameViolation::InvalidClass { index, .. } => mask_start + index,
                FrameViolation::SizeMismatch { .. } => depth_start,
            };
            return Err(DatasetError::format(at, v.to_string()));
        }
        let frame = DepthFrame::from_raw(width, height, depth, mask).expect("validated");
        items.push(LabeledFrame {
            frame,
            cube_position,
        });
        offset += item_len;
    }
    Dataset::new(items, domain, seed).map_err(|e| DatasetError::format(HEADER_LEN, e.to_string()))
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_dataset(dataset)?;
    write_atomic(path, &bytes).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_dataset(&bytes)
}
