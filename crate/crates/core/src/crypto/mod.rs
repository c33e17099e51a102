//! Arbitrary-precision modular arithmetic, textbook RSA, Diffie-Hellman,
//! SHA-1 and HMAC-SHA1.
//!
//! Everything in this module is a pure function: identical inputs always
//! produce identical outputs, and the only randomness ever consumed comes in
//! through an explicit `&mut impl RngCore` parameter. RSA is deliberately
//! textbook (no padding) because the secured handshake transports
//! fixed-format numeric payloads and the lab reproduces exact ciphertext
//! shapes; do not reuse this for anything real.

mod arith;
mod dh;
mod keyfile;
mod payload;
mod rsa;
mod sha1;

pub use arith::{generate_prime, is_probable_prime, mod_pow, random_below, random_in_range};
pub use dh::{dh_public, dh_shared, DhParams};
pub use keyfile::{parse_private_key, parse_public_key, render_private_key, render_public_key};
pub use payload::{decode_handshake_payload, encode_handshake_payload, session_key_bytes};
pub use rsa::{
    rsa_decrypt, rsa_encrypt, rsa_keygen, rsa_keypair_from_primes, rsa_recover,
    rsa_sign_recoverable, RsaPrivateKey, RsaPublicKey,
};
pub use sha1::{hmac_sha1, sha1};

use std::fmt;

/// Errors from the cryptographic primitives.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    /// Modular operation with a zero modulus.
    #[error("modulus must be nonzero")]
    ZeroModulus,
    /// RSA input is not reducible: the message/ciphertext must be < n.
    #[error("block too large for RSA modulus")]
    BlockTooLarge,
    /// A DH exponent or public value is outside [1, p).
    #[error("value out of range for {0}")]
    OutOfRange(&'static str),
    /// Handshake payload bytes do not decode as `p$g$yc`.
    #[error("malformed handshake payload: {0}")]
    MalformedPayload(String),
    /// Parameters violate a key-material invariant.
    #[error("invalid key material: {0}")]
    InvalidKeyMaterial(String),
    /// A key file line is missing or unparseable.
    #[error("malformed key file: {0}")]
    MalformedKeyFile(String),
}

/// A 20-byte SHA-1 (or HMAC-SHA1) digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 20]);

impl Digest {
    /// Lowercase 40-character hex rendering.
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl AsRef<[u8]> for Digest {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}
