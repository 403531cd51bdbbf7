//! Serializable matrix descriptors.
//!
//! A descriptor pins everything needed to rebuild a measurement matrix:
//! kind, shape, seed and scheme parameters. Serialization is canonical
//! (object keys are sorted), so equal descriptors give equal bytes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    TwoLayerWeak,
    Incoherent,
    RsCode,
    Stacked,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDescriptor {
    pub kind: MatrixKind,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<MatrixDescriptor>,
}

impl MatrixDescriptor {
    pub fn leaf(kind: MatrixKind, n: usize, m: usize, seed: Option<u64>, params: serde_json::Value) -> Self {
        Self { kind, n, m, seed, params, children: Vec::new() }
    }

    pub fn stacked(n: usize, params: serde_json::Value, children: Vec<MatrixDescriptor>) -> Self {
        let m = children.iter().map(|c| c.m).sum();
        Self { kind: MatrixKind::Stacked, n, m, seed: None, params, children }
    }

    /// Canonical JSON bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("descriptor serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format { line: e.line(), msg: e.to_string() })
    }

    /// 64-bit FNV-1a digest of the canonical bytes.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(&self.to_bytes())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn stacked_rows_sum() {
        let a = MatrixDescriptor::leaf(MatrixKind::Dense, 8, 3, None, json!({}));
        let b = MatrixDescriptor::leaf(MatrixKind::Incoherent, 8, 5, Some(1), json!({"k": 2}));
        let s = MatrixDescriptor::stacked(8, json!({}), vec![a, b]);
        assert_eq!(s.m, 8);
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let d = MatrixDescriptor::leaf(MatrixKind::RsCode, 4096, 100, None, json!({"z": 1, "a": 2.5}));
        let text = String::from_utf8(d.to_bytes()).unwrap();
        assert!(!text.contains("seed"));
        let back = MatrixDescriptor::from_json(&text).unwrap();
        assert_eq!(back.to_bytes(), d.to_bytes());
        assert_eq!(back.fingerprint(), d.fingerprint());
    }
}
