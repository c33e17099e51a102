//! The `p$g$yc` handshake payload codec and the session-key-to-HMAC-key
//! encoding.
//!
//! The first handshake ships the DH parameters and the client public value
//! as decimal ASCII joined by `$`, interpreted as one big-endian integer so
//! the whole thing fits through a single raw RSA block.

use num_bigint::BigUint;
use num_traits::Zero;

use super::CryptoError;

const SEPARATOR: u8 = b'$';

/// Render `p$g$yc` in decimal ASCII and fold the bytes into an integer.
pub fn encode_handshake_payload(p: &BigUint, g: &BigUint, yc: &BigUint) -> BigUint {
    let text = format!("{p}${g}${yc}");
    BigUint::from_bytes_be(text.as_bytes())
}

/// Inverse of [`encode_handshake_payload`]. Any deviation from the
/// `digits$digits$digits` shape is a parse error, which the handshake treats
/// as evidence of tampering.
pub fn decode_handshake_payload(m: &BigUint) -> Result<(BigUint, BigUint, BigUint), CryptoError> {
    if m.is_zero() {
        return Err(CryptoError::MalformedPayload("empty payload".into()));
    }
    let bytes = m.to_bytes_be();
    for &b in &bytes {
        if !(b.is_ascii_digit() || b == SEPARATOR) {
            return Err(CryptoError::MalformedPayload(format!(
                "unexpected byte 0x{b:02x}"
            )));
        }
    }
    let fields: Vec<&[u8]> = bytes.split(|&b| b == SEPARATOR).collect();
    if fields.len() != 3 {
        return Err(CryptoError::MalformedPayload(format!(
            "expected 3 fields, got {}",
            fields.len()
        )));
    }
    let mut parsed = Vec::with_capacity(3);
    for field in fields {
        if field.is_empty() {
            return Err(CryptoError::MalformedPayload("empty field".into()));
        }
        let text = std::str::from_utf8(field).expect("digits are ASCII");
        let value = text
            .parse::<BigUint>()
            .map_err(|e| CryptoError::MalformedPayload(e.to_string()))?;
        parsed.push(value);
    }
    let yc = parsed.pop().unwrap();
    let g = parsed.pop().unwrap();
    let p = parsed.pop().unwrap();
    Ok((p, g, yc))
}

/// Canonical encoding of the DH session key K when used as an HMAC key: its
/// decimal ASCII rendering (K=75 becomes the two bytes "75"). This is the
/// encoding that reproduces the reference experiment's digest.
pub fn session_key_bytes(k: &BigUint) -> Vec<u8> {
    k.to_string().into_bytes()
}
