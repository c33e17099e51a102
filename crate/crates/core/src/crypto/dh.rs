//! Diffie-Hellman over a prime field: the exchange the secured handshake
//! wraps in RSA.

use num_bigint::BigUint;
use num_traits::One;

use super::arith::{is_probable_prime, mod_pow};
use super::CryptoError;

/// Public DH parameters: prime modulus p and generator g.
///
/// g is not required to be a primitive root; the reference experiment's
/// (p=97, g=5) is accepted as-is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhParams {
    p: BigUint,
    g: BigUint,
}

impl DhParams {
    /// Requires p prime (probable, 32 rounds) and 1 < g < p.
    pub fn new(p: BigUint, g: BigUint) -> Result<Self, CryptoError> {
        if !is_probable_prime(&p, 32) {
            return Err(CryptoError::InvalidKeyMaterial("p is not prime".into()));
        }
        if g <= BigUint::one() || g >= p {
            return Err(CryptoError::InvalidKeyMaterial(
                "generator must satisfy 1 < g < p".into(),
            ));
        }
        Ok(Self { p, g })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }
}

fn check_exponent(x: &BigUint, p: &BigUint, what: &'static str) -> Result<(), CryptoError> {
    if x < &BigUint::one() || x >= p {
        return Err(CryptoError::OutOfRange(what));
    }
    Ok(())
}

/// Public value g^x mod p for private exponent x in [1, p).
pub fn dh_public(params: &DhParams, x: &BigUint) -> Result<BigUint, CryptoError> {
    check_exponent(x, &params.p, "DH private exponent")?;
    mod_pow(&params.g, x, &params.p)
}

/// Shared key peer_public^x mod p.
pub fn dh_shared(
    params: &DhParams,
    peer_public: &BigUint,
    x: &BigUint,
) -> Result<BigUint, CryptoError> {
    check_exponent(x, &params.p, "DH private exponent")?;
    check_exponent(peer_public, &params.p, "DH peer public value")?;
    mod_pow(peer_public, x, &params.p)
}
