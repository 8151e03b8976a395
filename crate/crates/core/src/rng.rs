//! Seeded random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream keyed by a base seed,
//! a purpose tag and an item index, so results do not depend on the order in
//! which images (or sweep points) are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keep streams for different stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    TrainLink = 3,
    Label = 4,
    Calibrate = 5,
    Experiment = 6,
    Dataset = 7,
    Codebook = 8,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
