//! Named random sub-streams derived from one top-level seed.
//!
//! Every stochastic component (world layout, per-frame noise, batch sampling,
//! dropout, weight init) draws from its own stream so that any one of them
//! can be varied without perturbing the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a 64-bit seed for sub-stream `name`, item `index`.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(name)).wrapping_add(splitmix64(index)))
}

/// Deterministic generator for sub-stream `name`, item `index`.
pub fn stream(seed: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, name, index))
}
