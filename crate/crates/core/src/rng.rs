//! Seeded random streams. Every run derives all randomness from one 64-bit
//! seed, split into fixed per-subsystem streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids. New subsystems get new constants; existing values never move.
pub mod streams {
    pub const CATEGORIZE: u64 = 1;
    pub const STYLES: u64 = 2;
    pub const GENERATE: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const ESTIMATE_K: u64 = 5;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a sub-index into a seed so that indexed jobs (per K, per chunk,
/// per category) get independent, order-free streams.
pub fn derive(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
