//! Seed derivation. Every random stream is a ChaCha8 generator keyed by a
//! root seed and a short tag path, so subsystems never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes `tags` into `root`; distinct tag paths give unrelated seeds.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(root), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn rng_from(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}

/// Stream tags.
pub mod tag {
    pub const SCENE: u64 = 1;
    pub const EXPAND: u64 = 2;
    pub const GEN_INIT: u64 = 3;
    pub const DIS_INIT: u64 = 4;
    pub const TRAIN_STEP: u64 = 5;
    pub const INFER: u64 = 6;
    pub const DIVLAB: u64 = 7;
    pub const PERMUTE: u64 = 8;
}
