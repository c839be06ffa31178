//! Stochastic depth-image transformations and augmentation sequences.
//!
//! Each [`TransformSpec`] picks one of eleven kernels, one of two magnitude
//! levels and one of three activation probabilities. An
//! [`AugmentationSequence`] applies its specs left to right; every
//! non-identity kind may appear at most once.
//!
//! Random draws happen in a fixed order so that a seed reproduces the same
//! augmented frame: for each spec one activation draw `u`, and only if
//! `u < probability` the kernel's own draws (listed on [`apply_spec`]).

pub mod kernels;
mod text;

pub use text::ParseError;

use crate::depth::{DepthFrame, SegClass};
use crate::rng::Rng;
use std::collections::BTreeSet;
use std::fmt;

/// Default maximum sequence length used by the search.
pub const DEFAULT_SEQUENCE_LENGTH: usize = 8;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub enum TransformKind {
    Identity,
    Affine,
    Cutout,
    Invert,
    Posterize,
    Scale,
    Sharpness,
    WhiteNoise,
    SaltNoise,
    BoundaryNoise,
    EraseObject,
}

impl TransformKind {
    pub const ALL: [TransformKind; 11] = [
        TransformKind::Identity,
        TransformKind::Affine,
        TransformKind::Cutout,
        TransformKind::Invert,
        TransformKind::Posterize,
        TransformKind::Scale,
        TransformKind::Sharpness,
        TransformKind::WhiteNoise,
        TransformKind::SaltNoise,
        TransformKind::BoundaryNoise,
        TransformKind::EraseObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Identity => "Identity",
            TransformKind::Affine => "Affine",
            TransformKind::Cutout => "Cutout",
            TransformKind::Invert => "Invert",
            TransformKind::Posterize => "Posterize",
            TransformKind::Scale => "Scale",
            TransformKind::Sharpness => "Sharpness",
            TransformKind::WhiteNoise => "WhiteNoise",
            TransformKind::SaltNoise => "SaltNoise",
            TransformKind::BoundaryNoise => "BoundaryNoise",
            TransformKind::EraseObject => "EraseObject",
        }
    }

    /// Identity and Invert have no magnitude parameter.
    pub fn is_parameterless(self) -> bool {
        matches!(self, TransformKind::Identity | TransformKind::Invert)
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Magnitude {
    Low,
    High,
}

impl Magnitude {
    pub const ALL: [Magnitude; 2] = [Magnitude::Low, Magnitude::High];
}

/// Activation probability, restricted to the three grid values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Probability {
    OneThird,
    TwoThirds,
    One,
}

impl Probability {
    pub const ALL: [Probability; 3] = [
        Probability::OneThird,
        Probability::TwoThirds,
        Probability::One,
    ];

    pub fn value(self) -> f64 {
        match self {
            Probability::OneThird => 1.0 / 3.0,
            Probability::TwoThirds => 2.0 / 3.0,
            Probability::One => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub magnitude: Magnitude,
    pub probability: Probability,
}

impl TransformSpec {
    pub const fn new(kind: TransformKind, magnitude: Magnitude, probability: Probability) -> Self {
        Self {
            kind,
            magnitude,
            probability,
        }
    }

    /// The spec at probability 1.
    pub const fn always(kind: TransformKind, magnitude: Magnitude) -> Self {
        Self::new(kind, magnitude, Probability::One)
    }

    /// Same behavior, with the ignored magnitude of parameterless kinds
    /// pinned to `Low`.
    pub fn canonical(self) -> Self {
        if self.kind.is_parameterless() {
            Self {
                magnitude: Magnitude::Low,
                ..self
            }
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("{kind} appears more than once (second occurrence at position {index})")]
    DuplicateKind { kind: TransformKind, index: usize },
    #[error("sequence has {len} transforms, limit is {max}")]
    TooLong { len: usize, max: usize },
}

/// Ordered list of transforms; non-identity kinds occur at most once.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AugmentationSequence {
    specs: Vec<TransformSpec>,
}

impl AugmentationSequence {
    pub fn new(specs: Vec<TransformSpec>) -> Result<Self, SequenceError> {
        let mut seen = BTreeSet::new();
        for (index, spec) in specs.iter().enumerate() {
            if spec.kind != TransformKind::Identity && !seen.insert(spec.kind) {
                return Err(SequenceError::DuplicateKind {
                    kind: spec.kind,
                    index,
                });
            }
        }
        Ok(Self { specs })
    }

    pub fn with_max_len(specs: Vec<TransformSpec>, max: usize) -> Result<Self, SequenceError> {
        if specs.len() > max {
            return Err(SequenceError::TooLong {
                len: specs.len(),
                max,
            });
        }
        Self::new(specs)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn specs(&self) -> &[TransformSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Non-identity kinds already used.
    pub fn used_kinds(&self) -> BTreeSet<TransformKind> {
        used_kinds(&self.specs)
    }

    /// Text form, e.g. `Cutout(L,1)&EraseObject(H,2/3)`; `none` when empty.
    pub fn render(&self) -> String {
        text::render(self)
    }

    pub fn parse(s: &str) -> Result<Self, ParseError> {
        text::parse(s)
    }

    /// The four-transform sequence used as the handcrafted baseline.
    pub fn handcrafted() -> Self {
        use TransformKind::*;
        Self::new(
            [Scale, WhiteNoise, EraseObject, SaltNoise]
                .into_iter()
                .map(|k| TransformSpec::always(k, Magnitude::Low))
                .collect(),
        )
        .expect("distinct kinds")
    }
}

impl fmt::Display for AugmentationSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl std::str::FromStr for AugmentationSequence {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

pub(crate) fn used_kinds(specs: &[TransformSpec]) -> BTreeSet<TransformKind> {
    specs
        .iter()
        .map(|s| s.kind)
        .filter(|k| *k != TransformKind::Identity)
        .collect()
}

/// Every `(kind, magnitude, probability)` triple whose kind is not in
/// `used`, on the full 11 x 2 x 3 grid. Identity is always available.
pub fn enumerate_choices(used: &BTreeSet<TransformKind>) -> Vec<TransformSpec> {
    enumerate_over(&TransformKind::ALL, used, false)
}

/// Like [`enumerate_choices`] but drops the duplicate magnitude of
/// parameterless kinds, so every returned spec behaves differently.
pub fn enumerate_distinct_choices(used: &BTreeSet<TransformKind>) -> Vec<TransformSpec> {
    enumerate_over(&TransformKind::ALL, used, true)
}

/// Choice enumeration restricted to `kinds`.
pub fn enumerate_over(
    kinds: &[TransformKind],
    used: &BTreeSet<TransformKind>,
    distinct: bool,
) -> Vec<TransformSpec> {
    let mut out = Vec::new();
    for &kind in kinds {
        if kind != TransformKind::Identity && used.contains(&kind) {
            continue;
        }
        for magnitude in Magnitude::ALL {
            if distinct && kind.is_parameterless() && magnitude == Magnitude::High {
                continue;
            }
            for probability in Probability::ALL {
                out.push(TransformSpec::new(kind, magnitude, probability));
            }
        }
    }
    out
}

/// Applies one spec.
///
/// Draw order after the activation draw (only when activated):
///
/// | kind | draws |
/// |------|-------|
/// | Affine | `tx`, `ty` (integers), rotation angle |
/// | Cutout | per rectangle: width fraction, height fraction, left, top, fill value |
/// | Sharpness | factor (Low only) |
/// | Scale | factor |
/// | WhiteNoise | one offset per pixel, row-major |
/// | SaltNoise | one uniform per pixel, row-major |
/// | EraseObject | class choice (Table, Wall) |
/// | others | none |
pub fn apply_spec(spec: &TransformSpec, frame: &DepthFrame, rng: &mut Rng) -> DepthFrame {
    let u = rng.uniform();
    if u >= spec.probability.value() {
        return frame.clone();
    }
    apply_kernel(spec.kind, spec.magnitude, frame, rng)
}

/// Runs the kernel unconditionally (no activation draw).
pub fn apply_kernel(
    kind: TransformKind,
    magnitude: Magnitude,
    frame: &DepthFrame,
    rng: &mut Rng,
) -> DepthFrame {
    let low = magnitude == Magnitude::Low;
    match kind {
        TransformKind::Identity => frame.clone(),
        TransformKind::Affine => {
            let (max_shift, max_angle) = if low { (9, 5.0) } else { (16, 10.0) };
            let tx = rng.int_range(-max_shift, max_shift);
            let ty = rng.int_range(-max_shift, max_shift);
            let angle = rng.range(-max_angle, max_angle);
            kernels::affine(frame, tx, ty, angle)
        }
        TransformKind::Cutout => {
            let count = if low { 1 } else { 3 };
            let rects: Vec<_> = (0..count)
                .map(|_| kernels::CutoutRect::sample(frame.width(), frame.height(), rng))
                .collect();
            kernels::cutout(frame, &rects)
        }
        TransformKind::Invert => kernels::invert(frame),
        TransformKind::Posterize => kernels::posterize(frame, if low { 5 } else { 7 }),
        TransformKind::Scale => {
            let c = if low {
                rng.range(0.95, 1.05)
            } else {
                rng.range(0.97, 1.03)
            };
            kernels::scale(frame, c)
        }
        TransformKind::Sharpness => {
            let f = if low { rng.range(0.5, 1.0) } else { 1.0 };
            kernels::sharpness(frame, f)
        }
        TransformKind::WhiteNoise => {
            kernels::white_noise(frame, if low { 0.04 } else { 0.08 }, rng)
        }
        TransformKind::SaltNoise => kernels::salt_noise(frame, if low { 0.01 } else { 0.03 }, rng),
        TransformKind::BoundaryNoise => kernels::boundary_noise(frame, if low { 2 } else { 4 }),
        TransformKind::EraseObject => {
            let class = if rng.below(2) == 0 {
                SegClass::Table
            } else {
                SegClass::Wall
            };
            kernels::erase_class(frame, class)
        }
    }
}

/// Folds [`apply_spec`] over the sequence, left to right, on one stream.
pub fn apply_sequence(seq: &AugmentationSequence, frame: &DepthFrame, rng: &mut Rng) -> DepthFrame {
    let mut out = frame.clone();
    for spec in seq.specs() {
        out = apply_spec(spec, &out, rng);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn constant(v: f32) -> DepthFrame {
        DepthFrame::filled(8, 8, v, SegClass::Table)
    }

    #[test]
    fn grid_has_66_triples() {
        assert_eq!(enumerate_choices(&BTreeSet::new()).len(), 66);
        assert_eq!(enumerate_distinct_choices(&BTreeSet::new()).len(), 60);
    }

    #[test]
    fn fully_used_leaves_identity() {
        let used: BTreeSet<_> = TransformKind::ALL[1..].iter().copied().collect();
        let c = enumerate_choices(&used);
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|s| s.kind == TransformKind::Identity));
    }

    #[test]
    fn used_kind_excluded() {
        let used = BTreeSet::from([TransformKind::Cutout]);
        let c = enumerate_choices(&used);
        assert_eq!(c.len(), 60);
        assert!(c.iter().all(|s| s.kind != TransformKind::Cutout));
    }

    #[test]
    fn invert_constant() {
        let spec = TransformSpec::always(TransformKind::Invert, Magnitude::Low);
        let out = apply_spec(&spec, &constant(0.3), &mut Rng::new(0));
        assert!(out.depth().iter().all(|&d| d == 1.0 - 0.3f32));
    }

    #[test]
    fn posterize_low_on_half() {
        let spec = TransformSpec::always(TransformKind::Posterize, Magnitude::Low);
        let out = apply_spec(&spec, &constant(0.5), &mut Rng::new(0));
        assert!(out.depth().iter().all(|&d| d == (120.0f64 / 255.0) as f32));
    }

    #[test]
    fn empty_sequence_is_identity() {
        let f = constant(0.42);
        assert_eq!(
            apply_sequence(&AugmentationSequence::empty(), &f, &mut Rng::new(1)),
            f
        );
    }

    #[test]
    fn duplicate_kind_rejected() {
        let inv = TransformSpec::always(TransformKind::Invert, Magnitude::Low);
        assert_eq!(
            AugmentationSequence::new(vec![inv, inv]),
            Err(SequenceError::DuplicateKind {
                kind: TransformKind::Invert,
                index: 1
            })
        );
        let id = TransformSpec::always(TransformKind::Identity, Magnitude::Low);
        assert!(AugmentationSequence::new(vec![id, id, id]).is_ok());
    }

    #[test]
    fn too_long_rejected() {
        let id = TransformSpec::always(TransformKind::Identity, Magnitude::Low);
        assert!(matches!(
            AugmentationSequence::with_max_len(vec![id; 9], 8),
            Err(SequenceError::TooLong { len: 9, max: 8 })
        ));
    }

    #[test]
    fn probability_zero_region_passes_through() {
        // Activation u >= p leaves the frame untouched and draws nothing else.
        let spec = TransformSpec::new(TransformKind::Invert, Magnitude::Low, Probability::OneThird);
        let f = constant(0.2);
        let mut rng = Rng::new(11);
        let mut probe = rng.clone();
        let u = probe.uniform();
        let out = apply_spec(&spec, &f, &mut rng);
        if u >= 1.0 / 3.0 {
            assert_eq!(out, f);
            assert_eq!(rng, probe);
        } else {
            assert_ne!(out, f);
        }
    }

    #[test]
    fn handcrafted_baseline() {
        assert_eq!(
            AugmentationSequence::handcrafted().render(),
            "Scale(L,1)&WhiteNoise(L,1)&EraseObject(L,1)&SaltNoise(L,1)"
        );
    }

    fn arb_spec() -> impl Strategy<Value = TransformSpec> {
        (0usize..11, any::<bool>(), 0usize..3).prop_map(|(k, hi, p)| {
            TransformSpec::new(
                TransformKind::ALL[k],
                if hi { Magnitude::High } else { Magnitude::Low },
                Probability::ALL[p],
            )
        })
    }

    proptest! {
        #[test]
        fn deterministic_given_seed(spec in arb_spec(), seed in any::<u64>()) {
            let f = crate::test_support::random_frame(12, 10, seed ^ 0x55);
            let a = apply_spec(&spec, &f, &mut Rng::new(seed));
            let b = apply_spec(&spec, &f, &mut Rng::new(seed));
            prop_assert_eq!(a, b);
        }
    }
}
