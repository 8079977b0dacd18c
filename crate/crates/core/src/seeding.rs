//! Deterministic sub-seed derivation.
//!
//! Every stochastic stage (restart initialization, bootstrap replications,
//! replication retries) draws its RNG from a seed derived here, so results
//! are reproducible and independent of execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a stream index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ mix(index.wrapping_add(0xa076_1d64_78bd_642f)))
}

/// Derive a child seed from a master seed and two stream indices
/// (e.g. replication number and retry attempt).
pub fn derive_seed2(master: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(master, a), b)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
