//! `demo-handshake`: the secured three-way handshake alone, with the key
//! material printed from both endpoints' perspective.

use anyhow::Context;
use num_bigint::BigUint;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use hijacklab::crypto::{is_probable_prime, rsa_keygen};
use hijacklab::protocol::{
    ClientSession, ConnectionId, EstablishOutcome, FixedDh, SecureConfig, ServerSession,
    SessionState,
};

use crate::{validation, CliError};

#[derive(clap::Args)]
pub struct Args {
    /// DH prime modulus (give all of --p --g --xc --xs, or none and use --bits).
    #[arg(long, requires_all = ["g", "xc", "xs"])]
    p: Option<BigUint>,
    /// DH generator.
    #[arg(long, requires = "p")]
    g: Option<BigUint>,
    /// Client private exponent.
    #[arg(long, requires = "p")]
    xc: Option<BigUint>,
    /// Server private exponent.
    #[arg(long, requires = "p")]
    xs: Option<BigUint>,
    /// Bit width of randomly drawn DH parameters (4..=32).
    #[arg(long, default_value_t = 16, conflicts_with = "p")]
    bits: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let fixed = match (&args.p, &args.g, &args.xc, &args.xs) {
        (Some(p), Some(g), Some(xc), Some(xs)) => {
            if !is_probable_prime(p, 32) {
                return Err(validation(format!("--p {p} is not prime")));
            }
            if g <= &BigUint::from(1u32) || g >= p {
                return Err(validation("--g must satisfy 1 < g < p"));
            }
            for (name, x) in [("--xc", xc), ("--xs", xs)] {
                if x < &BigUint::from(1u32) || x >= p {
                    return Err(validation(format!("{name} must satisfy 1 <= x < p")));
                }
            }
            Some(FixedDh {
                p: p.clone(),
                g: g.clone(),
                client_private: xc.clone(),
                server_private: xs.clone(),
            })
        }
        _ => {
            if !(4..=32).contains(&args.bits) {
                return Err(validation("--bits must be between 4 and 32"));
            }
            None
        }
    };

    let mut key_rng = ChaCha20Rng::seed_from_u64(args.seed ^ 0x6b_6579);
    let (public, private) = rsa_keygen(256, &BigUint::from(65537u32), &mut key_rng);

    let mut client_cfg = SecureConfig::secured_client(public.clone());
    let mut server_cfg = SecureConfig::secured_server(public, private);
    client_cfg.fixed_dh = fixed.clone();
    server_cfg.fixed_dh = fixed.clone();
    client_cfg.dh_prime_bits = args.bits;
    server_cfg.dh_prime_bits = args.bits;

    let conn = ConnectionId::new(
        "192.168.0.104:59999".parse().unwrap(),
        "192.168.0.105:49999".parse().unwrap(),
    );
    let mut client_rng = ChaCha20Rng::seed_from_u64(args.seed.wrapping_add(1));
    let mut server_rng = ChaCha20Rng::seed_from_u64(args.seed.wrapping_add(2));

    let (mut client, syn) = ClientSession::start(&client_cfg, conn, &mut client_rng)
        .context("first handshake failed")?;
    println!(
        "client: p={} g={} YC={}  (SYN seq J={}, ciphertext {} bytes)",
        client.dh_params().unwrap().p(),
        client.dh_params().unwrap().g(),
        client.dh_public_value().unwrap(),
        syn.seq,
        syn.payload.len()
    );

    let (mut server, synack) =
        ServerSession::on_syn(&server_cfg, &syn, &mut server_rng).context("second handshake")?;
    let synack = synack.ok_or_else(|| {
        CliError::Runtime(anyhow::anyhow!("server rejected the handshake payload"))
    })?;
    println!(
        "server: p={} g={} YC={} YS={} K={}  (SYN|ACK seq I={}, ack=J)",
        server.dh_params().unwrap().p(),
        server.dh_params().unwrap().g(),
        server.peer_public_value().unwrap(),
        server.dh_public_value().unwrap(),
        server.derived_key().unwrap(),
        synack.seq
    );

    let ack = client
        .on_synack(&client_cfg, &synack)
        .context("third handshake")?
        .ok_or_else(|| CliError::Runtime(anyhow::anyhow!("client rejected the SYN|ACK")))?;
    println!(
        "client: YS={} K={}  HMAC={}",
        client.peer_public_value().unwrap(),
        client.session_key().unwrap(),
        client.auth_digest().unwrap()
    );

    let outcome = server
        .on_ack(&server_cfg, &ack)
        .context("final verification")?;
    println!("server: HMAC'={}", server.auth_digest().unwrap());
    println!(
        "handshake: {:?} (client {:?}, server {:?})",
        outcome,
        client.state(),
        server.state()
    );
    if client.state() != SessionState::Established || outcome != EstablishOutcome::Established {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "handshake did not establish"
        )));
    }
    Ok(())
}
