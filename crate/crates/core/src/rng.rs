//! Seeded random streams. Every stochastic component derives its own stream
//! from a base seed and a purpose tag so runs stay reproducible when new
//! consumers are added.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Derive an independent stream for `(seed, tag)`.
pub fn stream(seed: u64, tag: u64) -> Rng {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

pub mod tags {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DATA: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const LAYER_DROP: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SUBSET: u64 = 7;
    pub const TOY: u64 = 8;
}
