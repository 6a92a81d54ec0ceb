//! Seed derivation and the generator used everywhere randomness is needed.
//!
//! Every random stream is a `ChaCha8Rng` seeded from a 64-bit value. Child
//! seeds are derived from a parent seed and a `(stream, index)` pair with the
//! SplitMix64 finalizer, so a stream depends only on its coordinates and never
//! on how work was scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep derived seeds for unrelated purposes apart.
pub mod stream {
    pub const TREE: u64 = 0x7472_6565;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const PERMUTATION: u64 = 0x7065_726d;
    pub const FOLDS: u64 = 0x666f_6c64;
    pub const CV_FOREST: u64 = 0x6376_6672;
    pub const SPLIT_HALF: u64 = 0x6861_6c66;
    pub const STABILITY: u64 = 0x7374_6162;
    pub const OLS_BOOTSTRAP: u64 = 0x6f6c_7362;
    pub const SYNTH: u64 = 0x7379_6e74;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ splitmix64(stream)) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parent: u64, stream: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(parent, stream, index))
}
