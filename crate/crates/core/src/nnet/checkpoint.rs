//! Model checkpoint files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "MAUG"          4 bytes magic
//! version         u16
//! in_channels     u32
//! height          u32
//! width           u32
//! conv_count      u32
//! conv_count x { out_channels u32, kernel u32, stride u32 }
//! hidden          u32
//! outputs         u32
//! theta_len       u64
//! theta           theta_len x f64
//! ```

use super::arch::{Architecture, ConvSpec};
use super::model::{Model, ModelError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MAUG";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("{0} trailing bytes after theta")]
    Trailing(usize),
    #[error("field does not fit in 32 bits: {0}")]
    Unencodable(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn encode_checkpoint(model: &Model) -> Result<Vec<u8>, CheckpointError> {
    let arch = model.arch();
    let theta = model.theta();
    let mut out = Vec::with_capacity(64 + theta.len() * 8);
    let u32_field = |out: &mut Vec<u8>, v: usize| -> Result<(), CheckpointError> {
        let v = u32::try_from(v).map_err(|_| CheckpointError::Unencodable(v))?;
        out.extend_from_slice(&v.to_le_bytes());
        Ok(())
    };
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    u32_field(&mut out, arch.in_channels)?;
    u32_field(&mut out, arch.height)?;
    u32_field(&mut out, arch.width)?;
    u32_field(&mut out, arch.convs.len())?;
    for c in &arch.convs {
        u32_field(&mut out, c.out_channels)?;
        u32_field(&mut out, c.kernel)?;
        u32_field(&mut out, c.stride)?;
    }
    u32_field(&mut out, arch.hidden)?;
    u32_field(&mut out, arch.outputs)?;
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let end = self.at + N;
        let slice = self
            .bytes
            .get(self.at..end)
            .ok_or(CheckpointError::Truncated(self.at))?;
        self.at = end;
        Ok(slice.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if &r.take::<4>()? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let (in_channels, height, width) = (r.u32()?, r.u32()?, r.u32()?);
    let n = r.u32()?;
    // Each conv stage needs 12 bytes; reject absurd counts before allocating.
    if n > bytes.len() / 12 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    let mut convs = Vec::with_capacity(n);
    for _ in 0..n {
        convs.push(ConvSpec {
            out_channels: r.u32()?,
            kernel: r.u32()?,
            stride: r.u32()?,
        });
    }
    let (hidden, outputs) = (r.u32()?, r.u32()?);
    let len = u64::from_le_bytes(r.take()?) as usize;
    let rest = bytes.len() - r.at;
    if len > rest / 8 {
        return Err(CheckpointError::Truncated(bytes.len()));
    }
    if rest != len * 8 {
        return Err(CheckpointError::Trailing(rest - len * 8));
    }
    let theta = bytes[r.at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let arch = Architecture {
        in_channels,
        height,
        width,
        convs,
        hidden,
        outputs,
    };
    Ok(Model::from_parts(arch, theta)?)
}
