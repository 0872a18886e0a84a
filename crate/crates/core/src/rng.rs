//! Seeded random streams.
//!
//! Every Monte Carlo trial owns an independent ChaCha8 stream whose seed is
//! derived from the master seed and the trial index with [`mix_seed`]. The
//! derivation is pure integer arithmetic, so it is bit-exact on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for stream `index` under `master`:
/// `splitmix64(splitmix64(master) ^ index * GOLDEN_GAMMA)`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of the family rooted at `master`.
pub fn substream(master: u64, index: u64) -> SimRng {
    seeded(mix_seed(master, index))
}
