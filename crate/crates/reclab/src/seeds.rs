//! Deterministic stream derivation.
//!
//! Every parallel work item draws from a ChaCha8 stream keyed by
//! (master seed, purpose, item index). Work items are fixed-size blocks that
//! do not depend on the worker count, and block results are reduced in index
//! order, so all randomized output is a pure function of the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const INVARIANT: u64 = 1;
pub(crate) const STRATIFIED: u64 = 2;
pub(crate) const MEAN_ROOF: u64 = 3;
pub(crate) const FLOW_SAMPLE: u64 = 4;
pub(crate) const ORBIT_TAIL: u64 = 7;
pub(crate) const RETURN_GAPS: u64 = 8;
pub(crate) const STARTS: u64 = 9;

pub(crate) fn stream(master: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&purpose.to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Mixes a salt into a master seed so that independent sample sets drawn for
/// the same experiment use disjoint stream families.
pub(crate) fn mix(master: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over the xor; good enough to separate streams.
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
