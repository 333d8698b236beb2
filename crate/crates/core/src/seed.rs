//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is derived from an explicit base seed
//! and a (purpose, index) pair, so no two consumers share a stream and no
//! stream depends on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purposes for derived streams. The discriminant is mixed into the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Instance = 1,
    Candidates = 2,
    PairCap = 3,
    Init = 4,
    Shuffle = 5,
    TestCandidates = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(base ^ splitmix64((stream as u64) << 56 ^ splitmix64(index)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
