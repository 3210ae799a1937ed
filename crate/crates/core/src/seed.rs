//! Seed derivation. Every stochastic choice in the harness draws from a
//! ChaCha8 stream seeded through here, so outputs depend only on the
//! inputs and the user seed, never on platform or thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Incremental builder for a derived 64-bit seed. Each part is
/// length-prefixed so `("ab", "c")` and `("a", "bc")` never collide.
#[derive(Clone)]
pub struct SeedMixer(Sha256);

impl SeedMixer {
    pub fn new(domain: &str) -> Self {
        let mut h = Sha256::new();
        h.update((domain.len() as u64).to_le_bytes());
        h.update(domain.as_bytes());
        SeedMixer(h)
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.0.update(8u64.to_le_bytes());
        self.0.update(v.to_le_bytes());
        self
    }

    pub fn bytes(mut self, b: &[u8]) -> Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn finish(self) -> u64 {
        let out = self.0.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&out[..8]);
        u64::from_le_bytes(first)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}

/// Seed for one repetition of a sample's ladder evaluation.
pub fn repeat_seed(run_seed: u64, repeat_index: u32) -> u64 {
    SeedMixer::new("repeat").u64(run_seed).u64(repeat_index as u64).finish()
}
