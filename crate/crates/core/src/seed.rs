//! Deterministic seed splitting.
//!
//! Every randomized task (a restart, a bootstrap replica, a permutation batch)
//! gets its own seed derived from a root seed and a path of integer tags, so
//! results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of SplitMix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` and a path of tags.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(root), |h, &tag| {
        splitmix64(h ^ splitmix64(tag.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used across modules. Kept in one place so two tasks never
/// share a path by accident.
pub(crate) mod tags {
    pub const EM_RESTART: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const CASE_PAIR: u64 = 3;
    pub const CONTROL_PAIR: u64 = 4;
    pub const PMAD_SUBSET: u64 = 5;
    pub const PMAD_TEST: u64 = 6;
    pub const ADM: u64 = 7;
    pub const REGION: u64 = 8;
    pub const CASE_DATA: u64 = 9;
    pub const CONTROL_DATA: u64 = 10;
    pub const SIMILARITY: u64 = 11;
    pub const REPLICATE: u64 = 12;
    pub const METHOD: u64 = 13;
    pub const META: u64 = 14;
}
