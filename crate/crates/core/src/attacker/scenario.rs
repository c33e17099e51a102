//! Scenario orchestration: protocol endpoints as simulator drivers, the
//! hijack playbook against either protocol mode, and the window-sweep
//! experiment.

use std::collections::VecDeque;
use std::net::SocketAddrV4;
use std::time::Instant;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::crypto::rsa_keygen;
use crate::netsim::{Driver, Host, Reaction, SimError, SimNet, TranscriptEvent};
use crate::protocol::{
    ClientSession, ConnectionId, EstablishOutcome, FixedDh, Flags, Mode, ProtocolError, Receipt,
    SecureConfig, Segment, ServerSession, SessionState,
};

use super::{AttackPlan, HijackTap};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Client endpoint as a simulator driver: completes the handshake, then
/// pushes its scripted payloads onto the link in one burst.
pub struct ClientDriver {
    cfg: SecureConfig,
    session: ClientSession,
    script: VecDeque<Vec<u8>>,
}

impl ClientDriver {
    pub fn new(cfg: SecureConfig, session: ClientSession, script: Vec<Vec<u8>>) -> Self {
        Self {
            cfg,
            session,
            script: script.into(),
        }
    }

    pub fn session(&self) -> &ClientSession {
        &self.session
    }
}

impl Driver for ClientDriver {
    fn on_segment(&mut self, seg: &Segment) -> Reaction {
        if seg.flags.contains(Flags::RST) {
            return if self.session.on_rst(seg) {
                Reaction::nothing().with_note("connection reset")
            } else {
                Reaction::nothing().with_note("rst ignored")
            };
        }
        match self.session.state() {
            SessionState::SynSent => match self.session.on_synack(&self.cfg, seg) {
                Ok(Some(ack)) => {
                    let mut out = vec![ack];
                    while let Some(payload) = self.script.pop_front() {
                        out.extend(
                            self.session
                                .send_data(&self.cfg, &payload)
                                .expect("established client can send"),
                        );
                    }
                    Reaction::reply(out).with_note("established")
                }
                Ok(None) => match self.session.state() {
                    SessionState::Failed => {
                        Reaction::nothing().with_alarm("handshake verification failed")
                    }
                    _ => Reaction::nothing().with_note("discarded"),
                },
                Err(e) => Reaction::nothing().with_note(format!("error: {e}")),
            },
            SessionState::Established => {
                let ordinal = self.session.recv_window_ordinal();
                let (receipt, rst) = self.session.recv_data(&self.cfg, seg);
                reaction_for_receipt(&receipt, ordinal, rst)
            }
            _ => Reaction::nothing().with_note("ignored"),
        }
    }
}

/// Server endpoint as a simulator driver.
pub struct ServerDriver {
    cfg: SecureConfig,
    rng: ChaCha20Rng,
    session: Option<ServerSession>,
    detected_at: Option<u64>,
    checkpoints_ok: u64,
}

impl ServerDriver {
    pub fn new(cfg: SecureConfig, seed: u64) -> Self {
        Self {
            cfg,
            rng: ChaCha20Rng::seed_from_u64(seed),
            session: None,
            detected_at: None,
            checkpoints_ok: 0,
        }
    }

    pub fn session(&self) -> Option<&ServerSession> {
        self.session.as_ref()
    }

    /// Window ordinal of the first failed checkpoint, if any.
    pub fn detected_at(&self) -> Option<u64> {
        self.detected_at
    }

    pub fn checkpoints_ok(&self) -> u64 {
        self.checkpoints_ok
    }
}

impl Driver for ServerDriver {
    fn on_segment(&mut self, seg: &Segment) -> Reaction {
        let Some(session) = self.session.as_mut() else {
            // Listening: only a bare SYN opens a session.
            if seg.flags.contains(Flags::SYN) && !seg.flags.contains(Flags::ACK) {
                return match ServerSession::on_syn(&self.cfg, seg, &mut self.rng) {
                    Ok((session, reply)) => {
                        let rejected = session.state() == SessionState::Failed;
                        self.session = Some(session);
                        if rejected {
                            Reaction::nothing().with_alarm("handshake payload rejected")
                        } else {
                            Reaction::reply(reply.into_iter().collect()).with_note("syn-ack")
                        }
                    }
                    Err(e) => Reaction::nothing().with_note(format!("error: {e}")),
                };
            }
            return Reaction::nothing().with_note("no session");
        };

        if seg.flags.contains(Flags::RST) {
            return if session.on_rst(seg) {
                Reaction::nothing().with_note("connection reset")
            } else {
                Reaction::nothing().with_note("rst ignored")
            };
        }

        match session.state() {
            SessionState::SynRcvd => match session.on_ack(&self.cfg, seg) {
                Ok(EstablishOutcome::Established) => Reaction::nothing().with_note("established"),
                Ok(EstablishOutcome::Failed) => {
                    Reaction::nothing().with_alarm("third-handshake HMAC mismatch")
                }
                Ok(EstablishOutcome::Ignored) => Reaction::nothing().with_note("discarded"),
                Err(e) => Reaction::nothing().with_note(format!("error: {e}")),
            },
            SessionState::Established => {
                let ordinal = session.recv_window_ordinal();
                let (receipt, rst) = session.recv_data(&self.cfg, seg);
                match receipt {
                    Receipt::CheckpointOk => self.checkpoints_ok += 1,
                    Receipt::CheckpointFail => {
                        self.detected_at.get_or_insert(ordinal);
                    }
                    _ => {}
                }
                reaction_for_receipt(&receipt, ordinal, rst)
            }
            _ => Reaction::nothing().with_note("ignored"),
        }
    }
}

fn reaction_for_receipt(receipt: &Receipt, ordinal: u64, rst: Option<Segment>) -> Reaction {
    let reaction = Reaction::reply(rst.into_iter().collect());
    match receipt {
        Receipt::Accepted(_) => reaction.with_note("accepted"),
        Receipt::CheckpointOk => reaction.with_note(format!("checkpoint ok (window {ordinal})")),
        Receipt::CheckpointFail => reaction
            .with_note(format!("checkpoint FAIL (window {ordinal})"))
            .with_alarm(format!("integrity checkpoint failed (window {ordinal})")),
        Receipt::Rejected(reason) => reaction.with_note(format!("rejected: {reason}")),
    }
}

/// Configuration for one hijack run. `Default` plus a mode gives the
/// reference experiment: its addresses, "sudo passwd root", W=100.
#[derive(Debug, Clone)]
pub struct HijackScenario {
    pub mode: Mode,
    pub command: Vec<u8>,
    pub window: u32,
    /// Scripted client payloads; None picks a mode-appropriate default
    /// (3 for plain, one full window for secured).
    pub honest_packets: Option<u32>,
    /// Inject after this many observed client data segments; None picks the
    /// default (after all honest traffic for plain, mid-window for secured).
    pub inject_after: Option<u32>,
    /// Number of forged data segments the attacker injects.
    pub forged_count: u32,
    /// Send the client RST before the injection (the alternative ordering).
    pub rst_first: bool,
    /// False runs the no-attack control.
    pub attack: bool,
    pub client_addr: SocketAddrV4,
    pub server_addr: SocketAddrV4,
    pub rsa_bits: u32,
    /// DH material; None draws random parameters per the config bit width.
    pub fixed_dh: Option<FixedDh>,
    pub dh_prime_bits: u32,
    pub seed: u64,
    pub max_events: u64,
}

impl HijackScenario {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            command: b"sudo passwd root".to_vec(),
            window: 100,
            honest_packets: None,
            inject_after: None,
            forged_count: 1,
            rst_first: false,
            attack: true,
            client_addr: "192.168.0.104:59999".parse().unwrap(),
            server_addr: "192.168.0.105:49999".parse().unwrap(),
            rsa_bits: 256,
            fixed_dh: Some(FixedDh::reference()),
            dh_prime_bits: 16,
            seed: 0,
            max_events: 1_000_000,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn honest_packets(&self) -> u32 {
        self.honest_packets.unwrap_or(match self.mode {
            Mode::Plain => 3,
            Mode::Secured => self.window,
        })
    }

    fn inject_after(&self) -> u32 {
        self.inject_after.unwrap_or(match self.mode {
            Mode::Plain => self.honest_packets(),
            Mode::Secured => self.window.div_ceil(2),
        })
    }
}

/// The single JSON object a hijack run reports.
#[derive(Debug, Clone, Serialize)]
pub struct HijackReport {
    pub mode: Mode,
    pub server_accepted_forgery: bool,
    pub detected_at_checkpoint: Option<u64>,
    pub forged_accepted_before_detection: u64,
    pub client_reset: bool,
    /// Path of the persisted transcript, when one was written.
    pub transcript: Option<String>,
}

/// Everything a hijack run produced, for reporting and assertions.
pub struct HijackRun {
    pub report: HijackReport,
    pub transcript: Vec<TranscriptEvent>,
    pub conn: ConnectionId,
    pub client_state: SessionState,
    pub server_state: SessionState,
    /// Payloads the server committed as good.
    pub server_accepted: Vec<Vec<u8>>,
    /// Payloads the server discarded at a failed checkpoint.
    pub server_quarantined: Vec<Vec<u8>>,
    /// Forged data segments the attacker placed on the link.
    pub injected: Vec<Segment>,
    /// Checkpoint digests computed by the client for the client-to-server
    /// direction (the per-direction sender cost).
    pub client_hmac_count: u64,
    /// Checkpoint digests the server computed to verify that direction.
    pub server_recv_hmac_count: u64,
    pub checkpoints_ok: u64,
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Run the hijack playbook: honest handshake and traffic, sniff, forge the
/// injection, knock the client offline. Outcomes are report data; a
/// successful hijack of the plain protocol is not an error.
pub fn run_hijack(sc: &HijackScenario) -> Result<HijackRun, ScenarioError> {
    let conn = ConnectionId::new(sc.client_addr, sc.server_addr);

    let (client_cfg, server_cfg) = match sc.mode {
        Mode::Plain => {
            let mut cfg = SecureConfig::plain();
            cfg.window = sc.window;
            (cfg.clone(), cfg)
        }
        Mode::Secured => {
            let mut key_rng = ChaCha20Rng::seed_from_u64(sub_seed(sc.seed, 0));
            let (public, private) = rsa_keygen(sc.rsa_bits, &BigUint::from(65537u32), &mut key_rng);
            let mut client = SecureConfig::secured_client(public.clone()).with_window(sc.window);
            let mut server = SecureConfig::secured_server(public, private).with_window(sc.window);
            client.fixed_dh = sc.fixed_dh.clone();
            server.fixed_dh = sc.fixed_dh.clone();
            client.dh_prime_bits = sc.dh_prime_bits;
            server.dh_prime_bits = sc.dh_prime_bits;
            (client, server)
        }
    };

    let mut net = SimNet::new(
        Host::new("client", *sc.client_addr.ip()),
        Host::new("server", *sc.server_addr.ip()),
    )
    .with_max_events(sc.max_events);

    let (tap, log) = if sc.attack {
        let mut forged_payloads = vec![sc.command.clone()];
        for i in 1..sc.forged_count {
            forged_payloads.push(format!("forged-{i:04}").into_bytes());
        }
        HijackTap::with_plan(AttackPlan {
            trigger_after_data: u64::from(sc.inject_after()),
            forged_payloads,
            rst_to_client: true,
            rst_first: sc.rst_first,
        })
    } else {
        HijackTap::passive()
    };
    net.attach_tap(Box::new(tap));

    let script: Vec<Vec<u8>> = (1..=sc.honest_packets())
        .map(|i| format!("cmd-{i:04}").into_bytes())
        .collect();

    let mut client_rng = ChaCha20Rng::seed_from_u64(sub_seed(sc.seed, 1));
    let (client_session, syn) = ClientSession::start(&client_cfg, conn, &mut client_rng)?;
    let mut client = ClientDriver::new(client_cfg, client_session, script);
    let mut server = ServerDriver::new(server_cfg, sub_seed(sc.seed, 2));

    net.send("client", syn)?;
    net.run_until_idle(&mut client, &mut server)?;

    let injected = log.borrow().injected.clone();
    let (server_accepted, server_quarantined, server_state, recv_hmac) = match server.session() {
        Some(s) => (
            s.accepted_payloads().to_vec(),
            s.quarantined_payloads().to_vec(),
            s.state(),
            s.recv_hmac_count(),
        ),
        None => (Vec::new(), Vec::new(), SessionState::Closed, 0),
    };

    let forged_accepted = count_matches(
        &injected,
        server_accepted.iter().chain(server_quarantined.iter()),
    );
    let server_accepted_forgery = injected
        .iter()
        .any(|seg| server_accepted.iter().any(|p| p == &seg.payload));

    let report = HijackReport {
        mode: sc.mode,
        server_accepted_forgery,
        detected_at_checkpoint: server.detected_at(),
        forged_accepted_before_detection: forged_accepted,
        client_reset: client.session().state() == SessionState::Reset,
        transcript: None,
    };

    Ok(HijackRun {
        report,
        transcript: net.transcript().to_vec(),
        conn,
        client_state: client.session().state(),
        server_state,
        server_accepted,
        server_quarantined,
        injected,
        client_hmac_count: client.session().send_hmac_count(),
        server_recv_hmac_count: recv_hmac,
        checkpoints_ok: server.checkpoints_ok(),
    })
}

/// Multiset count of forged payloads that appear in the receiver's accepted
/// or quarantined lists.
fn count_matches<'a>(injected: &[Segment], mut received: impl Iterator<Item = &'a Vec<u8>>) -> u64 {
    let mut remaining: Vec<&[u8]> = injected.iter().map(|s| s.payload.as_slice()).collect();
    let mut count = 0;
    for payload in &mut received {
        if let Some(pos) = remaining.iter().position(|p| *p == payload.as_slice()) {
            remaining.swap_remove(pos);
            count += 1;
        }
    }
    count
}

/// Where the sweep injects within each trial's first window.
#[derive(Debug, Clone, Copy)]
pub enum InjectAt {
    /// Fixed offset in [1, W].
    Offset(u32),
    /// Seeded-random offset in [1, W], fresh per trial.
    Random,
}

#[derive(Debug, Clone)]
pub struct SweepParams {
    pub windows: Vec<u32>,
    pub packets: u32,
    pub inject_at: InjectAt,
    pub trials: u32,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            windows: vec![1, 10, 100, 1000],
            packets: 10_000,
            inject_at: InjectAt::Random,
            trials: 5,
            seed: 0,
        }
    }
}

/// One row of the window-sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub window: u32,
    pub trials: u32,
    /// Checkpoint HMACs computed per direction for the honest N-packet run.
    pub hmac_computations: u64,
    pub mean_exposure: f64,
    pub max_exposure: u64,
    /// Fraction of injection trials detected; the scheme demands 1.0.
    pub detection_rate: f64,
    pub elapsed_ms: u64,
}

/// The resource/exposure tradeoff experiment: for each window value, measure
/// the per-direction HMAC cost of an honest N-packet transfer, then run
/// greedy-injection trials and measure how many forged payloads were
/// provisionally accepted before the checkpoint machinery caught on.
pub fn run_window_sweep(params: &SweepParams) -> Result<Vec<SweepRow>, ScenarioError> {
    assert!(
        params.windows.iter().all(|w| *w >= 1),
        "window values must be >= 1"
    );
    let mut rows = Vec::with_capacity(params.windows.len());

    for &window in &params.windows {
        let started = Instant::now();

        let base = HijackScenario {
            window,
            honest_packets: Some(params.packets),
            ..HijackScenario::new(Mode::Secured)
        };

        // Honest baseline: the per-direction HMAC cost.
        let honest = run_hijack(&HijackScenario {
            attack: false,
            seed: sub_seed(params.seed, u64::from(window)),
            ..base.clone()
        })?;
        debug_assert_eq!(honest.client_hmac_count, honest.server_recv_hmac_count);

        let mut offset_rng =
            ChaCha20Rng::seed_from_u64(sub_seed(params.seed, 0x0ff5e7 ^ u64::from(window)));
        let mut exposures = Vec::with_capacity(params.trials as usize);
        let mut detected = 0u32;
        for trial in 0..params.trials {
            let offset = match params.inject_at {
                InjectAt::Offset(k) => k.clamp(1, window),
                InjectAt::Random => offset_rng.gen_range(1..=window),
            };
            // A greedy attacker: keep injecting until the window betrays it.
            let run = run_hijack(&HijackScenario {
                attack: true,
                inject_after: Some(offset),
                forged_count: window,
                seed: sub_seed(params.seed, u64::from(window) << 32 | u64::from(trial)),
                ..base.clone()
            })?;
            if run.report.detected_at_checkpoint.is_some() {
                detected += 1;
            }
            exposures.push(run.report.forged_accepted_before_detection);
        }

        let mean_exposure = if exposures.is_empty() {
            0.0
        } else {
            exposures.iter().sum::<u64>() as f64 / exposures.len() as f64
        };
        rows.push(SweepRow {
            window,
            trials: params.trials,
            hmac_computations: honest.client_hmac_count,
            mean_exposure,
            max_exposure: exposures.iter().copied().max().unwrap_or(0),
            detection_rate: if params.trials == 0 {
                1.0
            } else {
                f64::from(detected) / f64::from(params.trials)
            },
            elapsed_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(rows)
}
