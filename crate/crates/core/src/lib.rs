//! Learning depth-image augmentation sequences for sim-to-real transfer.
//!
//! The crate renders synthetic depth scenes, augments them with sequences of
//! stochastic transforms, scores each sequence by how well a cube-position
//! regressor trained on augmented synthetic frames localizes cubes in a
//! held-out shifted domain, and searches the sequence space with Monte-Carlo
//! tree search. The chosen sequence is then used to train a behavior-cloned
//! reach policy.
//!
//! Module map:
//!
//! - [`depth`]: frames, datasets, file formats
//! - [`transforms`]: the eleven kernels and sequence application
//! - [`scene`]: analytic renderer, shifted-domain generator, scripted expert
//! - [`nnet`]: small convnet, training, scoring, rollouts
//! - [`search`]: tree search over sequences

pub mod depth;
pub mod nnet;
pub mod rng;
pub mod scene;
pub mod search;
pub mod transforms;

#[doc(hidden)]
pub mod test_support;

pub use depth::{Dataset, DepthFrame, Domain, LabeledFrame, SegClass};
pub use rng::Rng;
pub use transforms::{AugmentationSequence, Magnitude, Probability, TransformKind, TransformSpec};

/// The guide's chapters, compiled as doc-tests so their snippets stay in sync
/// with the code.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/frames.md")]
    pub mod frames {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    pub mod transforms {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    pub mod scenes {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/search.md")]
    pub mod search {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    pub mod pipeline {}
}
