//! Named, reproducible random streams derived from a single root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives an independent 64-bit seed for the stream `name` from `root`.
pub fn stream_seed(root: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
