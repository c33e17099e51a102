//! Textbook RSA: keygen over random primes, raw modular encrypt/decrypt and
//! message-recovering sign/recover. No padding: see the module docs.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;

use super::arith::{generate_prime, is_probable_prime, mod_pow};
use super::CryptoError;

/// RSA public key (n, e): the handshake's S+.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaPublicKey {
    n: BigUint,
    e: BigUint,
}

/// RSA private key (n, d): the handshake's S-.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaPrivateKey {
    n: BigUint,
    d: BigUint,
}

impl RsaPublicKey {
    /// Requires n >= 15 (smallest two-prime product with usable residues) and
    /// an odd public exponent e >= 3.
    pub fn new(n: BigUint, e: BigUint) -> Result<Self, CryptoError> {
        if n < BigUint::from(15u32) {
            return Err(CryptoError::InvalidKeyMaterial("n must be >= 15".into()));
        }
        if e < BigUint::from(3u32) || e.is_even() {
            return Err(CryptoError::InvalidKeyMaterial(
                "e must be odd and >= 3".into(),
            ));
        }
        Ok(Self { n, e })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn e(&self) -> &BigUint {
        &self.e
    }
}

impl RsaPrivateKey {
    pub fn new(n: BigUint, d: BigUint) -> Result<Self, CryptoError> {
        if n < BigUint::from(15u32) {
            return Err(CryptoError::InvalidKeyMaterial("n must be >= 15".into()));
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn d(&self) -> &BigUint {
        &self.d
    }
}

/// Generate an RSA key pair with an n of `bits` significant bits.
///
/// Primes are regenerated until gcd(e, phi) = 1; d is computed modulo
/// phi(n) rather than lambda(n), so the classic (61, 53, 17) pair yields
/// d = 2753.
pub fn rsa_keygen(bits: u32, e: &BigUint, rng: &mut impl RngCore) -> (RsaPublicKey, RsaPrivateKey) {
    assert!(bits >= 8, "modulus must have at least 8 bits");
    loop {
        let p = generate_prime(bits / 2, rng);
        let q = generate_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        if let Ok(pair) = keypair_from_parts(&p, &q, e) {
            return pair;
        }
    }
}

/// Build the key pair from explicitly chosen primes. Used by tests and demos
/// that pin p and q.
pub fn rsa_keypair_from_primes(
    p: &BigUint,
    q: &BigUint,
    e: &BigUint,
) -> Result<(RsaPublicKey, RsaPrivateKey), CryptoError> {
    if p == q {
        return Err(CryptoError::InvalidKeyMaterial(
            "p and q must differ".into(),
        ));
    }
    if !is_probable_prime(p, 32) || !is_probable_prime(q, 32) {
        return Err(CryptoError::InvalidKeyMaterial(
            "p and q must be prime".into(),
        ));
    }
    keypair_from_parts(p, q, e)
}

fn keypair_from_parts(
    p: &BigUint,
    q: &BigUint,
    e: &BigUint,
) -> Result<(RsaPublicKey, RsaPrivateKey), CryptoError> {
    let n = p * q;
    let phi = (p - 1u32) * (q - 1u32);
    if e.gcd(&phi) != BigUint::one() {
        return Err(CryptoError::InvalidKeyMaterial(
            "e shares a factor with phi(n)".into(),
        ));
    }
    let d = e
        .modinv(&phi)
        .ok_or_else(|| CryptoError::InvalidKeyMaterial("e not invertible mod phi(n)".into()))?;
    Ok((
        RsaPublicKey::new(n.clone(), e.clone())?,
        RsaPrivateKey::new(n, d)?,
    ))
}

/// m^e mod n. Fails unless m < n.
pub fn rsa_encrypt(key: &RsaPublicKey, m: &BigUint) -> Result<BigUint, CryptoError> {
    if m >= &key.n {
        return Err(CryptoError::BlockTooLarge);
    }
    mod_pow(m, &key.e, &key.n)
}

/// c^d mod n, inverse of [`rsa_encrypt`] for a matching pair. Fails unless c < n.
pub fn rsa_decrypt(key: &RsaPrivateKey, c: &BigUint) -> Result<BigUint, CryptoError> {
    if c >= &key.n {
        return Err(CryptoError::BlockTooLarge);
    }
    mod_pow(c, &key.d, &key.n)
}

/// Message-recovering signature s = m^d mod n. The verifier recovers m itself
/// with [`rsa_recover`]; there is no separate verification predicate.
pub fn rsa_sign_recoverable(key: &RsaPrivateKey, m: &BigUint) -> Result<BigUint, CryptoError> {
    if m >= &key.n {
        return Err(CryptoError::BlockTooLarge);
    }
    mod_pow(m, &key.d, &key.n)
}

/// s^e mod n, recovering the message signed by [`rsa_sign_recoverable`].
pub fn rsa_recover(key: &RsaPublicKey, s: &BigUint) -> Result<BigUint, CryptoError> {
    if s >= &key.n {
        return Err(CryptoError::BlockTooLarge);
    }
    mod_pow(s, &key.e, &key.n)
}
