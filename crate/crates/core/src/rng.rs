//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream derived from a
//! tuple of integers (experiment seed, row, episode, ...). Work can then be
//! split across threads in any way without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of keys into a single 64-bit stream id.
pub fn mix(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn stream(keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix(keys))
}

/// Domain tags keep streams used for different purposes apart.
pub mod tag {
    pub const LABELS: u64 = 1;
    pub const FEATURES: u64 = 2;
    pub const MASK: u64 = 3;
    pub const ROLLOUT: u64 = 4;
    pub const GROUND_TRUTH: u64 = 5;
    pub const CLASSIFIER: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const QFIT: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const MISS_ROLLOUT: u64 = 10;
    pub const GREEDY: u64 = 11;
}
