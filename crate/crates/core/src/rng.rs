//! Deterministic derivation of independent random streams.
//!
//! Every randomized routine takes a `u64` seed and derives its own stream with
//! [`rng_for`], so repetitions, sites, and pipeline stages draw from
//! non-overlapping generators and results are bit-reproducible across runs
//! and platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a cheap, well-mixed 64-bit hash.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a stream label.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix(splitmix(master).wrapping_add(splitmix(stream ^ 0xA5A5_A5A5_A5A5_A5A5)))
}

/// A ChaCha generator for the given (master, stream) pair.
pub fn rng_for(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
