//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a
//! user seed and a tag path (data block, ensemble member, grid cell). Streams
//! never depend on scheduling, so parallel and serial runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Tags for the independent streams of a synthetic data model.
pub mod tags {
    pub const FEATURES: u64 = 0x6665_6174;
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const SUBSETS: u64 = 0x7375_6273;
    pub const WEIGHTS: u64 = 0x7765_6967;
    pub const TEST: u64 = 0x7465_7374;
    pub const PROJECTION: u64 = 0x7072_6f6a;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &tag| splitmix(acc ^ splitmix(tag)))
}

/// Independent generator for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}
