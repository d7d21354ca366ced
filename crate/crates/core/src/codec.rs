//! Bit-exact text encoding of `f64` arrays.
//!
//! Arrays are stored as base64 (standard alphabet, padded) of the
//! little-endian IEEE-754 bytes of each element, in order.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{KacError, Result};

pub fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| KacError::Checkpoint(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(KacError::Checkpoint(format!(
            "payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// `#[serde(with = "crate::codec::f64_vec")]` adaptor for `Vec<f64>` fields.
pub mod f64_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::encode_f64s(values))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        super::decode_f64s(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_special_bit_patterns() {
        let values = [0.0, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, -1e308];
        let back = decode_f64s(&encode_f64s(&values)).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let text = STANDARD.encode([0u8; 7]);
        assert!(decode_f64s(&text).is_err());
    }
}
