//! Seed derivation for reproducible parallel streams.
//!
//! Every independent unit of work (a trial, a Monte Carlo chunk, a cleanup
//! block) gets its own generator seeded from a hash of `(parent, index)`.
//! Results therefore never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `parent`.
pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0x6A09_E667_F3BC_C908)))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for stream `index` under `parent`.
pub fn child_rng(parent: u64, index: u64) -> Rng {
    rng_from(derive(parent, index))
}
