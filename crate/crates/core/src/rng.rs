//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! seeded from a master seed mixed with a stream identifier, so results do
//! not depend on thread scheduling or platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a stream index.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Same as [`derive_seed`], for a path of stream indices.
pub fn derive_seed_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &s| derive_seed(acc, s))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used by the harness.
pub mod streams {
    pub const INIT: u64 = 0x494E_4954;
    pub const STRUCTURE: u64 = 0x5354_5243;
    pub const SHUFFLE: u64 = 0x5348_4646;
}
