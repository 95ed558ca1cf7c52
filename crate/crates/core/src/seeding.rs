//! Deterministic derivation of independent seeds.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Derives a child seed from `base` and a path of stream indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |seed, &stream| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng.next_u64()
    })
}

/// A generator seeded from `derive_seed(base, path)`.
pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
