//! Fixtures shared by unit and integration tests.

use crate::depth::{DepthFrame, SegClass};
use crate::rng::Rng;

/// Random depth with a blocky mask (3x3 blocks of random classes), so
/// class boundaries exist.
pub fn random_frame(width: usize, height: usize, seed: u64) -> DepthFrame {
    let mut rng = Rng::new(seed);
    let depth: Vec<f32> = (0..width * height).map(|_| rng.uniform() as f32).collect();
    let bw = width.div_ceil(3);
    let blocks: Vec<SegClass> = (0..bw * height.div_ceil(3))
        .map(|_| SegClass::ALL[rng.below(5) as usize])
        .collect();
    let mask = (0..width * height)
        .map(|i| blocks[(i / width / 3) * bw + (i % width) / 3])
        .collect();
    DepthFrame::new(width, height, depth, mask).expect("random frame is valid")
}

/// Deterministic pseudo-random score in `[0, 1)` per sequence text (FNV-1a).
pub fn hashed_score(seq: &crate::AugmentationSequence, salt: u64) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ salt;
    for b in seq.render().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Number of slots where `seq` differs from `target` (missing slots count).
pub fn planted_score(
    seq: &crate::AugmentationSequence,
    target: &crate::AugmentationSequence,
) -> f64 {
    let (a, b) = (seq.specs(), target.specs());
    (0..a.len().max(b.len()))
        .filter(|&i| a.get(i) != b.get(i))
        .count() as f64
}
