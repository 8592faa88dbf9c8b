//! Seed derivation so every phase and sample draws from an independent stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for `(stream, index)` under `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream) ^ index)
}

pub fn rng_for(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

/// Stream tags used across the pipeline.
pub mod stream {
    pub const LUNG_DATA: u64 = 1;
    pub const LESION_DATA: u64 = 2;
    pub const CORRUPTION: u64 = 3;
    pub const LUNG_TRAIN: u64 = 4;
    pub const DISC_TRAIN: u64 = 5;
    pub const SEG_TRAIN: u64 = 6;
    pub const BOOTSTRAP: u64 = 7;
    pub const GRADCHECK: u64 = 8;
}
