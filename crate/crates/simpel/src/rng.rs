//! Deterministic RNG stream derivation.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`] stream derived
//! from a master seed and a stable label, so results are reproducible and
//! independent of thread scheduling: a parallel worker gets the same stream
//! for a given (seed, label, index) no matter which thread runs it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit FNV-1a hash. `std::hash` output is not guaranteed stable
/// across releases, so seed derivation uses this instead.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `(master, label, index)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut z = master ^ fnv1a64(label.as_bytes());
    z = splitmix64(z);
    splitmix64(z ^ index)
}

/// Derive an independent RNG stream from `(master, label, index)`.
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}
