//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! 64-bit seed (expanded with `SeedableRng::seed_from_u64`) and a 64-bit
//! stream id selected with `set_stream`. Distinct stream ids give independent
//! sequences from the same seed, which is how a single experiment seed is split
//! into initialization, noise, batching and validation streams. ChaCha8 output
//! is value-stable across rand_chacha releases, so runs reproduce bit-for-bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids. Anything not listed here is free for callers.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const VALIDATION: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const MANIFOLD_SPEC: u64 = 8;
}

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives per-run seeds from an experiment seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on (0, 1].
#[inline]
pub fn uniform_left_open(rng: &mut Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn uniform_open(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
