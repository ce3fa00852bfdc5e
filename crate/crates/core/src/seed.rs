//! Sub-seed derivation.
//!
//! Every random stream in a run is derived from one master seed with
//! SplitMix64: `derive(master, tag)` mixes the tag into the master seed and
//! runs two finalizer rounds. Tags are small constants ([`streams`]) optionally
//! combined with an index (vehicle number, fold round, epoch).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed for `tag` from `master`.
pub fn derive(master: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

/// Derive a sub-seed for the `index`-th item of stream `tag`.
pub fn derive_indexed(master: u64, tag: u64, index: u64) -> u64 {
    derive(derive(master, tag), index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags.
pub mod streams {
    pub const VEHICLE: u64 = 1;
    pub const ANONYMIZE: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const DETECTOR: u64 = 4;
    pub const REGRESSOR: u64 = 5;
    pub const CAPACITY_FOLDS: u64 = 6;
}
