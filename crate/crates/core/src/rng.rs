//! Seeded, splittable random streams.
//!
//! A [`RandomStream`] is a ChaCha20 generator whose key is derived from a
//! 64-bit seed. Child streams are obtained by hashing the parent key with a
//! label or an index, so the draws seen by trial `k` depend only on the seed
//! and `k`, never on how trials are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    key: [u8; 32],
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        let key = derive_key(b"tqme/root", &seed.to_le_bytes(), &[]);
        Self::from_key(seed, key)
    }

    fn from_key(seed: u64, key: [u8; 32]) -> Self {
        Self {
            seed,
            key,
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    /// The user-facing seed this stream (or its ancestor) was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream identified by a stable label, e.g. `"sweep"` or `"coverage"`.
    pub fn fork(&self, label: &str) -> Self {
        Self::from_key(self.seed, derive_key(b"fork", &self.key, label.as_bytes()))
    }

    /// Child stream identified by an index, e.g. a trial or grid-point number.
    pub fn split(&self, index: u64) -> Self {
        Self::from_key(
            self.seed,
            derive_key(b"split", &self.key, &index.to_le_bytes()),
        )
    }
}

fn derive_key(tag: &[u8], parent: &[u8], data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag);
    h.update(parent);
    h.update(data);
    h.finalize().into()
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
