//! Modular exponentiation and probable-prime machinery over `BigUint`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::CryptoError;

/// `base^exp mod modulus` by square-and-multiply, O(log exp) multiplications.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint, CryptoError> {
    if modulus.is_zero() {
        return Err(CryptoError::ZeroModulus);
    }
    Ok(base.modpow(exp, modulus))
}

/// Uniform random `BigUint` in `[0, bound)` by rejection sampling.
///
/// Panics if `bound` is zero.
pub fn random_below(rng: &mut impl RngCore, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "bound must be positive");
    let bits = bound.bits();
    let bytes = bits.div_ceil(8) as usize;
    // Mask the top byte down to the bound's bit length so rejection is cheap.
    let top_mask = if bits.is_multiple_of(8) {
        0xff
    } else {
        (1u8 << (bits % 8)) - 1
    };
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= top_mask;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Uniform random `BigUint` in `[low, high)`.
pub fn random_in_range(rng: &mut impl RngCore, low: &BigUint, high: &BigUint) -> BigUint {
    assert!(low < high, "empty range");
    low + random_below(rng, &(high - low))
}

/// Probable-prime test: deterministic trial division below 2^16, Miller-Rabin
/// with `rounds` bases above.
///
/// The Miller-Rabin bases are drawn from a ChaCha stream seeded from `n`
/// itself, so the function is pure: the same `(n, rounds)` always gives the
/// same answer. False-positive probability is below 4^-rounds.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> bool {
    assert!(rounds >= 1, "rounds must be >= 1");
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    if n < &BigUint::from(1u32 << 16) {
        let small = n.to_u64_digits()[0];
        return trial_division(small);
    }
    if (n % 2u32).is_zero() {
        return false;
    }

    // n - 1 = d * 2^s with d odd
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().expect("n > 1");
    let d = &n_minus_1 >> s;

    let mut base_rng = ChaCha20Rng::seed_from_u64(seed_from(n) ^ u64::from(rounds));
    let three = BigUint::from(3u32);
    'witness: for _ in 0..rounds {
        // base in [2, n-2]
        let a = random_in_range(&mut base_rng, &two, &(n - &three));
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn trial_division(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

fn seed_from(n: &BigUint) -> u64 {
    let digits = n.to_u64_digits();
    digits
        .iter()
        .fold(0x9e37_79b9_7f4a_7c15u64, |acc, d| acc.rotate_left(17) ^ d)
}

/// Random probable prime with exactly `bits` significant bits.
///
/// The top two bits are forced on so that a product of two such primes has
/// the full expected width, and the candidate is forced odd. Deterministic
/// for a given rng state.
pub fn generate_prime(bits: u32, rng: &mut impl RngCore) -> BigUint {
    assert!(bits >= 4, "need at least 4 bits for a prime candidate");
    let bytes = (bits as usize).div_ceil(8);
    let mut buf = vec![0u8; bytes];
    loop {
        rng.fill_bytes(&mut buf);
        let mut candidate = BigUint::from_bytes_be(&buf);
        // Trim to width, then pin top two bits and the low bit.
        candidate &= (BigUint::one() << bits) - 1u32;
        candidate |= BigUint::one() << (bits - 1);
        candidate |= BigUint::one() << (bits - 2);
        candidate |= BigUint::one();
        if is_probable_prime(&candidate, 32) {
            return candidate;
        }
    }
}
