//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a root seed plus a path of integers, so independent consumers
//! never share state and adding a consumer never shifts another's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |h, &p| mix(h ^ mix(p)))
}

pub fn derive(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stream tags. Values are part of the on-disk determinism contract.
pub mod tag {
    pub const NODE: u64 = 1;
    pub const BLOCK: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const STEP: u64 = 6;
    pub const NONMAP: u64 = 7;
    pub const TILES: u64 = 8;
    pub const ISMAP: u64 = 9;
}
