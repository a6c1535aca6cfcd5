//! Stable seed derivation, so every random stream is addressable by name
//! and independent of scheduling.

use sha2::{Digest, Sha256};

/// Derives a child seed from `master` and a label path.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
