//! Deterministic seed derivation.
//!
//! Every stochastic stage draws its generator from `(master seed, stage name,
//! indices)` so that stages can be re-run in isolation, in any order, and in
//! parallel without changing their output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Hash `(master, stage, indices)` into a 64-bit seed.
pub fn derive_seed(master: u64, stage: &str, indices: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((stage.len() as u64).to_le_bytes());
    hasher.update(stage.as_bytes());
    for index in indices {
        hasher.update(index.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
