use super::DepthFrame;
use std::path::Path;

/// Binary 16-bit greymap (P5, maxval 65535, big-endian samples).
pub fn encode_pgm(frame: &DepthFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", frame.width(), frame.height()).into_bytes();
    out.reserve(frame.len() * 2);
    for &d in frame.depth() {
        let v = (f64::from(d) * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn export_pgm(frame: &DepthFrame, path: &Path) -> std::io::Result<()> {
    super::io::write_atomic(path, &encode_pgm(frame))
}
