//! A deterministic laboratory for TCP session hijacking.
//!
//! The crate builds two variants of a miniature TCP-like transport and lets
//! an on-path attacker loose on both:
//!
//! * **plain**: the classic three-way handshake with no authentication,
//!   vulnerable to sequence-number forgery once the 4-tuple is known;
//! * **secured**: a hardened handshake that wraps a Diffie-Hellman exchange
//!   in RSA, signs the server's DH public key, authenticates the third
//!   handshake with HMAC-SHA1, and verifies a windowed HMAC checkpoint over
//!   every W data packets of the established session.
//!
//! Everything runs inside a single-process deterministic network simulator
//! ([`netsim`]), so a scenario plus a seed always reproduces the same
//! byte-identical transcript.
//!
//! None of the cryptography here is production grade: RSA is textbook and
//! unpadded, key sizes are desk-scale, and nothing is constant-time. That is
//! deliberate: the point is a reproducible protocol lab, not a TLS
//! replacement.

pub mod attacker;
pub mod crypto;
pub mod netsim;
pub mod protocol;
