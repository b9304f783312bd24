//! Seeding helpers.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng`, whose output
//! stream is fixed across platforms and releases of `rand_chacha`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of Monte-Carlo trial `index` under base seed `base`.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    base ^ index
}

/// Derives an independent stream seed from `base` and a tag (splitmix64).
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
