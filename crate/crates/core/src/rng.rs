//! Seed derivation.
//!
//! Every stochastic decision draws from a ChaCha stream keyed by a base seed
//! plus a path of tags (epoch, phase, sample id, view, ...). Streams are
//! independent of evaluation order, which keeps parallel work reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Stream tags used across the crate.
pub mod stream {
    pub const INIT_WEIGHTS: u64 = 1;
    pub const INIT_ARCH: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const EVAL_VIEWS: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const PRETRAIN: u64 = 7;
    pub const CLASSIFIER: u64 = 8;
    pub const GENERATE: u64 = 9;
    pub const STAGE_SEARCH: u64 = 10;
    pub const STAGE_PRETRAIN: u64 = 11;
    pub const STAGE_FIT: u64 = 12;
}
