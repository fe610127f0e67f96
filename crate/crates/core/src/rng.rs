//! Seeded, splittable random streams.
//!
//! A run has one root [`SeedStream`] built from its 64-bit seed. Components
//! derive named children (`root.child("market").child("agent/3")`) so adding a
//! consumer never shifts the draws of another. Child seeds are the first eight
//! bytes of `SHA-256(parent_seed_le || name)`; generators are ChaCha8.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, name: &str) -> SeedStream {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(name.as_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        SeedStream { seed: u64::from_le_bytes(bytes) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}
