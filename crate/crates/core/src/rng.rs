//! Seeded random streams.
//!
//! Every stochastic step draws from a [`ChaCha8Rng`] whose seed is derived
//! from the run seed and a tag path (generation, purpose, individual). A run is
//! therefore a pure function of its configuration, and a resumed run only
//! needs the run seed and the generation index to rebuild its streams.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Stream;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags into a new seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(base, tags))
}

/// Purpose tags for [`derive_seed`].
pub mod tag {
    pub const INIT: u64 = 1;
    pub const MATING: u64 = 2;
    pub const VARIATION: u64 = 3;
    pub const ENVIRONMENT: u64 = 4;
    pub const WEIGHTS: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const FINAL: u64 = 8;
}
