//! Unsupervised representation learning from unlabeled video frames.
//!
//! A small convolutional encoder is trained with temporal-coherence losses:
//! adjacent frames of a video are pulled together while frames from other
//! videos are pushed beyond a margin. The learned embedding is scored by
//! clustering held-out frames and measuring the conditional entropy of the
//! true categories given the discovered clusters.
//!
//! Module map:
//!
//! * [`videoset`]: corpus model, frame/manifest I/O, synthetic corpora, tuple sampling.
//! * [`encoder`]: the embedding network with exact forward/backward passes and checkpoints.
//! * [`losses`]: Siamese, Quadruplet and SFA losses with gradients.
//! * [`trainer`]: mini-batch SGD with weight decay, and classifier fine-tuning.
//! * [`discovery`]: K-means, spectral clustering, conditional entropy, embedding dumps.

pub mod discovery;
pub mod encoder;
mod error;
pub mod losses;
pub mod trainer;
pub mod videoset;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used for every seeded operation in the crate.
pub type Rng = ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
