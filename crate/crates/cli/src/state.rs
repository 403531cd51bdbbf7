//! Sketch state files: an 8-byte magic, the SHA-256 of the descriptor file
//! and `m` little-endian `f64` counters.

use sha2::{Digest, Sha256};

use crate::Failure;

pub const MAGIC: &[u8; 8] = b"DSKSTAT1";
const HEADER: usize = 8 + 32;

pub fn descriptor_hash(descriptor_bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(descriptor_bytes).into()
}

pub fn encode(hash: &[u8; 32], values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(hash);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Counters of a state file written for the descriptor with `hash` and `m` rows.
pub fn decode(bytes: &[u8], hash: &[u8; 32], m: usize) -> Result<Vec<f64>, Failure> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Failure::Format("not a sketch state file".into()));
    }
    if &bytes[8..HEADER] != hash {
        return Err(Failure::Format("sketch state was produced under a different descriptor".into()));
    }
    let body = &bytes[HEADER..];
    if body.len() != 8 * m {
        return Err(Failure::Format(format!("sketch state holds {} bytes of counters, expected {}", body.len(), 8 * m)));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}
