//! Scenario runner for the TCP session hijacking lab.
//!
//! Subcommands reproduce the two reference experiments (`demo-hijack`,
//! `demo-handshake`), measure the window-value tradeoff (`window-sweep`),
//! and manage demo RSA keys (`keygen`). Every command takes a `--seed`;
//! identical invocations produce identical outputs and artifacts (the sweep's
//! wall-clock column excepted).
//!
//! Exit status encodes operability, not attack outcome: 0 means the scenario
//! ran, 64 flags a usage error, 65 invalid parameter values, 1 runtime
//! failures such as unwritable output paths.

mod handshake;
mod hijack;
mod keygen;
mod sweep;

use std::process::exit;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

const EXIT_USAGE: i32 = 64;
const EXIT_VALIDATION: i32 = 65;

/// Lab-wide error with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "{msg}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

#[derive(Parser)]
#[command(
    name = "hijacklab",
    about = "Deterministic TCP session hijacking lab: plain vs authenticated handshakes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hijack playbook against the plain or secured protocol.
    DemoHijack(hijack::Args),
    /// Run just the secured three-way handshake and print the key material.
    DemoHandshake(handshake::Args),
    /// Sweep checkpoint window values: HMAC cost vs attacker exposure.
    WindowSweep(sweep::Args),
    /// Generate a demo RSA key pair as key files.
    Keygen(keygen::Args),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            exit(code);
        }
    };

    let result = match cli.command {
        Command::DemoHijack(args) => hijack::run(args),
        Command::DemoHandshake(args) => handshake::run(args),
        Command::WindowSweep(args) => sweep::run(args),
        Command::Keygen(args) => keygen::run(args),
    };

    if let Err(e) = result {
        eprintln!("error: {e}");
        exit(e.code());
    }
}
