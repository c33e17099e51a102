//! `keygen`: demo RSA key pairs in the lab's plain-text key file format.

use std::path::PathBuf;

use anyhow::Context;
use num_bigint::BigUint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use hijacklab::crypto::{render_private_key, render_public_key, rsa_keygen};

use crate::{validation, CliError};

#[derive(clap::Args)]
pub struct Args {
    /// Modulus width in bits (at least 8; these are demo keys, not security).
    #[arg(long, default_value_t = 256)]
    bits: u32,
    /// Output prefix: writes <prefix>.pub and <prefix>.key.
    #[arg(long)]
    out: PathBuf,
    /// Public exponent.
    #[arg(long, default_value_t = 65537)]
    exponent: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.bits < 8 {
        return Err(validation("--bits must be at least 8"));
    }
    if args.exponent < 3 || args.exponent.is_multiple_of(2) {
        return Err(validation("--exponent must be odd and at least 3"));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let (public, private) = rsa_keygen(args.bits, &BigUint::from(args.exponent), &mut rng);

    let pub_path = PathBuf::from(format!("{}.pub", args.out.display()));
    let key_path = PathBuf::from(format!("{}.key", args.out.display()));
    std::fs::write(&pub_path, render_public_key(&public))
        .with_context(|| format!("cannot write {}", pub_path.display()))?;
    std::fs::write(&key_path, render_private_key(&public, &private))
        .with_context(|| format!("cannot write {}", key_path.display()))?;

    println!("wrote {}", pub_path.display());
    println!("wrote {}", key_path.display());
    println!("n has {} bits, e = {}", public.n().bits(), public.e());
    Ok(())
}
