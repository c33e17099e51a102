//! `demo-hijack`: honest session, on-path sniffing, forged injection, forged
//! RST: against either protocol mode.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use clap::ValueEnum;
use hijacklab::attacker::{run_hijack, HijackRun, HijackScenario};
use hijacklab::netsim::{write_transcript, EventKind};
use hijacklab::protocol::Mode;

use crate::{validation, CliError};

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Plain,
    Secured,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plain => Mode::Plain,
            ModeArg::Secured => Mode::Secured,
        }
    }
}

#[derive(clap::Args)]
pub struct Args {
    /// Protocol the endpoints speak.
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Payload the attacker injects.
    #[arg(long, default_value = "sudo passwd root")]
    command: String,
    /// Checkpoint window value W (secured mode).
    #[arg(long, default_value_t = 100)]
    window: u32,
    /// Honest client payloads before/around the attack
    /// (default: 3 in plain mode, one full window in secured mode).
    #[arg(long)]
    packets: Option<u32>,
    /// Inject after this many observed client data segments
    /// (default: after all honest traffic in plain mode, mid-window in secured).
    #[arg(long)]
    inject_after: Option<u32>,
    /// Send the client RST before the injection instead of after it.
    #[arg(long)]
    rst_first: bool,
    /// Attach the tap but never attack (control run).
    #[arg(long)]
    no_attack: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the link transcript as JSON lines here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.window < 1 {
        return Err(validation("--window must be at least 1"));
    }
    if args.inject_after == Some(0) {
        return Err(validation("--inject-after must be at least 1"));
    }

    let scenario = HijackScenario {
        command: args.command.clone().into_bytes(),
        window: args.window,
        honest_packets: args.packets,
        inject_after: args.inject_after,
        rst_first: args.rst_first,
        attack: !args.no_attack,
        seed: args.seed,
        ..HijackScenario::new(args.mode.into())
    };
    let mut run = run_hijack(&scenario).map_err(anyhow::Error::from)?;

    if let Some(path) = &args.transcript {
        let file = File::create(path)
            .with_context(|| format!("cannot create transcript file {}", path.display()))?;
        write_transcript(&run.transcript, &mut BufWriter::new(file))
            .context("writing transcript")?;
        run.report.transcript = Some(path.display().to_string());
    }

    narrate(&scenario, &run);

    let report_json = serde_json::to_string_pretty(&run.report).expect("report serializes");
    if let Some(path) = &args.json {
        std::fs::write(path, format!("{report_json}\n"))
            .with_context(|| format!("cannot write report {}", path.display()))?;
    }
    println!("{report_json}");
    Ok(())
}

fn narrate(scenario: &HijackScenario, run: &HijackRun) {
    println!(
        "== demo-hijack: {} mode, W={}, seed {} ==",
        run.report.mode, scenario.window, scenario.seed
    );
    println!("link: {}", run.conn);

    // The server's view, matching the reference experiment's console output.
    println!("Listening...");
    let accepted_session = run
        .transcript
        .iter()
        .any(|e| e.actor == "server" && e.note == "established");
    if accepted_session {
        println!("Accept!");
        println!(
            "Connection addr: ({}, {})",
            run.conn.client.ip(),
            run.conn.client.port()
        );
    }
    for payload in &run.server_accepted {
        println!("Recv: {}", String::from_utf8_lossy(payload));
    }

    for event in &run.transcript {
        match (event.kind, &event.segment) {
            (EventKind::Injected, Some(seg)) => println!(
                "[attacker] injected {} -> {} seq={} ({} bytes)",
                seg.src_addr(),
                seg.dst_addr(),
                seg.seq,
                seg.payload.len()
            ),
            (EventKind::Alarm, _) => println!("[{}] ALARM: {}", event.actor, event.note),
            _ => {}
        }
    }

    if !run.server_quarantined.is_empty() {
        println!(
            "server quarantined {} uncommitted payload(s) from the failed window",
            run.server_quarantined.len()
        );
    }
    println!(
        "client state: {:?}; server state: {:?}",
        run.client_state, run.server_state
    );
}
