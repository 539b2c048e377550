//! Keyed random streams.
//!
//! Every replicate of a Monte Carlo experiment draws from its own stream,
//! derived from `(seed, index)`, so results do not depend on execution order
//! or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child `index` of `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Random stream for child `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(child_seed(seed, index))
}
