//! Stable seed derivation.
//!
//! Seeds are the first eight bytes (little endian) of
//! `SHA-256(root.to_le_bytes() || label)`, so they depend only on the root seed
//! and the label and never on how many other volumes exist.

use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Mask seed of one volume under a plan seed.
pub fn mask_seed(plan_seed: u64, volume_id: &str) -> u64 {
    derive_seed(plan_seed, volume_id)
}
