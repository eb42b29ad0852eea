//! Stable seed derivation for independent random streams.
//!
//! Every random decision (split, bootstrap, random baseline, generator draw)
//! gets its own stream keyed by the run seed plus a path of tags, so results
//! do not depend on task scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of splitmix64.
pub fn mix(state: u64, value: u64) -> u64 {
    let mut z = state ^ value.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of a string.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed, 0x5eed), |acc, &t| mix(acc, t))
}

pub fn rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}
