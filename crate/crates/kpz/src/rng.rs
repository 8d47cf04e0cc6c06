//! Reproducible random streams.
//!
//! A stream is keyed by `(seed, purpose, lane)` through SHA-256 and the
//! replica index selects the ChaCha stream, so every replica draws the same
//! numbers no matter which worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: String,
    pub lane: u64,
    pub replica: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: &str) -> Self {
        Self { seed, purpose: purpose.to_owned(), lane: 0, replica: 0 }
    }

    pub fn lane(mut self, lane: u64) -> Self {
        self.lane = lane;
        self
    }

    pub fn replica(mut self, replica: u64) -> Self {
        self.replica = replica;
        self
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((self.purpose.len() as u64).to_le_bytes());
        h.update(self.purpose.as_bytes());
        h.update(self.lane.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.replica);
        rng
    }
}
