//! Deterministic seed derivation.
//!
//! A run is seeded by a single `u64`. Every randomized component draws from
//! its own stream derived by hashing the parent seed with a string label
//! (and, for per-item streams, an index):
//!
//! ```text
//! child  = splitmix64(parent ^ fnv1a64(label))
//! stream = splitmix64(child ^ (index + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! RNGs are ChaCha12 seeded from the derived value, so parallel rollouts over
//! a batch use independent streams and reproduce the sequential order exactly.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a child seed for the component named `label`.
pub fn split(parent: u64, label: &str) -> u64 {
    splitmix64(parent ^ fnv1a64(label))
}

/// Derive the `index`-th stream under a seed (batch items, epochs, ...).
pub fn split_index(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ index.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// ChaCha12 generator for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
