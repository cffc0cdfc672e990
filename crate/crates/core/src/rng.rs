//! Deterministic per-replica random streams.
//!
//! Every replica draws from its own ChaCha8 stream whose 64-bit seed is
//! `mix64(master, index)`:
//!
//! ```text
//! splitmix64(z) = let z = z + 0x9E3779B97F4A7C15;
//!                 let z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!                 let z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//!                 z ^ (z >> 31)                         (wrapping arithmetic)
//! mix64(master, index) = splitmix64(splitmix64(master) ^ index)
//! ```
//!
//! The 64-bit seed is expanded into the ChaCha key by
//! `rand_core::SeedableRng::seed_from_u64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream type used by every simulation in the crate.
pub type StreamRng = ChaCha8Rng;

pub fn splitmix64(z: u64) -> u64 {
    let z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix64(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

/// Stream `index` under `master`.
pub fn stream(master: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix64(master, index))
}
