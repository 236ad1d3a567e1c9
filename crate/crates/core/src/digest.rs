//! SHA-256 helpers shared by the simulated-noise stream, cache logging, and
//! dataset digests. Everything that must replay identically across runs and
//! platforms hashes through here.

use sha2::{Digest, Sha256};

/// Hash length-prefixed parts so `["ab","c"]` and `["a","bc"]` differ.
pub(crate) fn sha256_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub(crate) fn sha256_hex(parts: &[&[u8]]) -> String {
    let digest = sha256_parts(parts);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Map parts to a float in `[0, 1)` via the first 8 digest bytes.
pub(crate) fn unit_interval(parts: &[&[u8]]) -> f64 {
    let digest = sha256_parts(parts);
    let word = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    // 53 significant bits keep the mapping exact in f64.
    (word >> 11) as f64 / (1u64 << 53) as f64
}

/// A full 32-byte RNG seed derived from parts.
pub(crate) fn rng_seed(parts: &[&[u8]]) -> [u8; 32] {
    sha256_parts(parts)
}
