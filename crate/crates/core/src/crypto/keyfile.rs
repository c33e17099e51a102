//! Plain-text key files: one `field=decimal` line each, `n` and `e` for
//! public keys, plus `d` for private ones.

use num_bigint::BigUint;

use super::rsa::{RsaPrivateKey, RsaPublicKey};
use super::CryptoError;

pub fn render_public_key(key: &RsaPublicKey) -> String {
    format!("n={}\ne={}\n", key.n(), key.e())
}

pub fn render_private_key(public: &RsaPublicKey, private: &RsaPrivateKey) -> String {
    format!("n={}\ne={}\nd={}\n", public.n(), public.e(), private.d())
}

pub fn parse_public_key(text: &str) -> Result<RsaPublicKey, CryptoError> {
    let fields = parse_fields(text)?;
    RsaPublicKey::new(take(&fields, "n")?, take(&fields, "e")?)
}

/// Parses a private key file, returning both halves of the pair (the file
/// carries e as well so the public half can be rebuilt).
pub fn parse_private_key(text: &str) -> Result<(RsaPublicKey, RsaPrivateKey), CryptoError> {
    let fields = parse_fields(text)?;
    let n = take(&fields, "n")?;
    let public = RsaPublicKey::new(n.clone(), take(&fields, "e")?)?;
    let private = RsaPrivateKey::new(n, take(&fields, "d")?)?;
    Ok((public, private))
}

fn parse_fields(text: &str) -> Result<Vec<(String, BigUint)>, CryptoError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, digits) = line.split_once('=').ok_or_else(|| {
            CryptoError::MalformedKeyFile(format!("line {}: missing '='", lineno + 1))
        })?;
        let value = digits
            .trim()
            .parse::<BigUint>()
            .map_err(|e| CryptoError::MalformedKeyFile(format!("line {}: {e}", lineno + 1)))?;
        out.push((name.trim().to_string(), value));
    }
    Ok(out)
}

fn take(fields: &[(String, BigUint)], name: &str) -> Result<BigUint, CryptoError> {
    fields
        .iter()
        .find(|(k, _)| k == name)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| CryptoError::MalformedKeyFile(format!("missing field '{name}'")))
}
