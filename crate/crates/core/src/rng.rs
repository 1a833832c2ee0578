//! Counter-based seed derivation.
//!
//! Every random draw in the simulator comes from a ChaCha stream whose key is
//! derived from the master seed plus a fixed tuple of (purpose, participant,
//! round, epoch). Two draws with the same key are identical no matter when or
//! in which order they happen, so runs are reproducible at the sub-experiment
//! level.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. The discriminant is mixed into the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Partition = 2,
    Validation = 3,
    Sgd = 4,
    Adversary = 5,
    Synthetic = 6,
    Split = 7,
    Balance = 8,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit subseed from a master seed and a list of key components.
///
/// The key is absorbed one word at a time: `h = mix(h + GOLDEN + word)`,
/// starting from `h = mix(master)`.
pub fn derive_seed(master: u64, purpose: Purpose, key: &[u64]) -> u64 {
    let mut h = mix(master);
    for word in std::iter::once(purpose as u64).chain(key.iter().copied()) {
        h = mix(h.wrapping_add(GOLDEN).wrapping_add(word));
    }
    h
}

pub fn stream(master: u64, purpose: Purpose, key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, key))
}
