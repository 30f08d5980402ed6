//! Counter-based keyed random streams.
//!
//! A [`StreamKey`] is a SHA-256 digest of a domain tag, a user seed and any
//! number of length-prefixed identifiers. Each key addresses 2⁶⁴ independent
//! ChaCha8 streams, one per counter value, so a draw is a pure function of
//! `(seed, identifiers, counter)` and never of how many draws came before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn derive(domain: &str, seed: u64, parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        absorb(&mut h, domain.as_bytes());
        h.update(seed.to_le_bytes());
        for p in parts {
            absorb(&mut h, p);
        }
        StreamKey(h.finalize().into())
    }

    /// Generator for stream number `counter` under this key.
    pub fn rng(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(counter);
        rng
    }
}

fn absorb(h: &mut Sha256, bytes: &[u8]) {
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

/// Stable 64-bit digest of a list of indices, used to address streams by
/// content rather than by position.
pub fn index_digest(indices: &[u32]) -> u64 {
    let mut h = Sha256::new();
    h.update((indices.len() as u64).to_le_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let out: [u8; 32] = h.finalize().into();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}
