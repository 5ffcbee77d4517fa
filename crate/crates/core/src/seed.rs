//! Seed derivation.
//!
//! Every random choice in the toolkit is driven by a 64-bit seed derived
//! from a single master seed and a stream index, so that runs are
//! reproducible end to end and independent components never share a
//! stream by accident.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream indices for the toolkit's top-level components.
///
/// Derived seeds are `derive_seed(master, STREAM + i)` where `i` counts
/// instances within the component (model index, target index, ...).
/// Streams are spaced far apart so instance counters cannot collide.
pub mod streams {
    pub const DATASET: u64 = 0x0100_0000;
    pub const SPLIT: u64 = 0x0200_0000;
    pub const PLAN_CALIB: u64 = 0x0300_0000;
    pub const PLAN_EVAL: u64 = 0x0400_0000;
    pub const MODEL: u64 = 0x0500_0000;
    pub const POISON: u64 = 0x0600_0000;
    pub const TARGET_SAMPLE: u64 = 0x0700_0000;
    pub const FIXED_TEACHER: u64 = 0x0800_0000;
    pub const SHADOW_RUN: u64 = 0x0900_0000;
    pub const POPULATION: u64 = 0x0A00_0000;
}

/// Offset added to a pipeline's teacher seed to obtain its student seed,
/// so one seed describes a whole teacher/student pair.
pub const STUDENT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives a child seed from a master seed and a stream index.
///
/// SplitMix64 finalizer over `master + stream * odd-constant`; bijective
/// in the combined input, so distinct streams give distinct seeds under a
/// fixed master.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The RNG used everywhere in the toolkit. ChaCha gives a portable,
/// version-stable stream for a given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
