//! Seed derivation. Every stochastic component gets its own generator derived
//! from a base seed and a tag path, so results never depend on the order in
//! which independent pieces of work are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a single 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn derive_rng(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

// Stream tags, kept distinct so sibling generators never collide.
pub(crate) const TAG_EVENT: u64 = 0x4556;
pub(crate) const TAG_DEVICE: u64 = 0x4445;
pub(crate) const TAG_SPLIT: u64 = 0x5350;
pub(crate) const TAG_INIT: u64 = 0x494e;
pub(crate) const TAG_SHUFFLE: u64 = 0x5348;
pub(crate) const TAG_NOISE: u64 = 0x4e4f;
pub(crate) const TAG_PCA: u64 = 0x5043;
pub(crate) const TAG_BASELINE: u64 = 0x4241;
