//! The on-path adversary: sniffs frames through a tap, derives the session
//! identifiers a hijack needs, and forges injection and reset segments.
//!
//! The attacker never touches endpoint state and never breaks cryptography -
//! its only powers are observe, drop, and inject. Everything it knows comes
//! from bytes it saw on the link.

mod scenario;

pub use scenario::{
    run_hijack, run_window_sweep, ClientDriver, HijackReport, HijackRun, HijackScenario, InjectAt,
    ScenarioError, ServerDriver, SweepParams, SweepRow,
};

use std::cell::RefCell;
use std::rc::Rc;

use crate::netsim::{Tap, TapVerdict};
use crate::protocol::{ConnectionId, Flags, Segment, CHECKPOINT_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttackerError {
    /// Not enough sniffed traffic to derive the session identifiers.
    #[error("insufficient observations to derive session intel")]
    IntelUnavailable,
}

/// Everything a hijack needs, derived purely from observed frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionIntel {
    pub conn: ConnectionId,
    /// The sequence number the server will accept next from the client
    /// (last client seq + payload length, plain-TCP arithmetic).
    pub next_seq: u32,
    /// The acknowledgment number the client is currently using.
    pub expected_ack: u32,
    pub ttl: u8,
    pub last_window: u16,
}

/// Which endpoint a forged RST is aimed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstTarget {
    Client,
    Server,
}

/// Derive [`SessionIntel`] from an ordered list of sniffed segments.
///
/// The first SYN orients the connection (its source is the client). The
/// sequence arithmetic uses the latest client-to-server segment that carries
/// data or an acknowledgment; checkpoint-marker segments are skipped, since
/// they consume no sequence space.
pub fn extract_session_intel(observed: &[Segment]) -> Result<SessionIntel, AttackerError> {
    let syn = observed
        .iter()
        .find(|s| s.flags.contains(Flags::SYN) && !s.flags.contains(Flags::ACK));
    let conn = match syn {
        Some(s) => ConnectionId::from_syn(s),
        None => ConnectionId::from_syn(observed.first().ok_or(AttackerError::IntelUnavailable)?),
    };

    let basis = observed
        .iter()
        .rfind(|s| {
            conn.forward_matches(s)
                && !s.flags.contains(Flags::SYN)
                && !s.flags.contains(Flags::RST)
                && s.window != CHECKPOINT_WINDOW
                && (s.flags.contains(Flags::ACK) || !s.payload.is_empty())
        })
        .ok_or(AttackerError::IntelUnavailable)?;

    Ok(SessionIntel {
        conn,
        next_seq: basis.seq.wrapping_add(basis.payload.len() as u32),
        expected_ack: basis.ack,
        ttl: basis.ttl,
        last_window: basis.window,
    })
}

/// Forge a data segment the server will attribute to the client. Field for
/// field, this is the classic spoofed-injection tool invocation: ACK|PSH,
/// window 128, TTL 128, the sniffed next sequence and acknowledgment numbers.
pub fn forge_injection(intel: &SessionIntel, data: &[u8]) -> Segment {
    Segment {
        src_ip: *intel.conn.client.ip(),
        dst_ip: *intel.conn.server.ip(),
        src_port: intel.conn.client.port(),
        dst_port: intel.conn.server.port(),
        seq: intel.next_seq,
        ack: intel.expected_ack,
        flags: Flags::ACK | Flags::PSH,
        window: 128,
        ttl: 128,
        payload: data.to_vec(),
    }
}

/// Forge a bare RST that knocks the chosen endpoint offline, impersonating
/// its peer and using the sequence number the target expects next.
pub fn forge_rst(intel: &SessionIntel, target: RstTarget) -> Segment {
    let (src, dst, seq) = match target {
        RstTarget::Client => (intel.conn.server, intel.conn.client, intel.expected_ack),
        RstTarget::Server => (intel.conn.client, intel.conn.server, intel.next_seq),
    };
    Segment {
        src_ip: *src.ip(),
        dst_ip: *dst.ip(),
        src_port: src.port(),
        dst_port: dst.port(),
        seq,
        ack: 0,
        flags: Flags::RST,
        window: 0,
        ttl: intel.ttl,
        payload: Vec::new(),
    }
}

/// The attack playbook a [`HijackTap`] runs once its trigger fires.
#[derive(Debug, Clone)]
pub struct AttackPlan {
    /// Fire after observing this many client-to-server data segments.
    pub trigger_after_data: u64,
    /// Data payloads forged at consecutive sequence numbers.
    pub forged_payloads: Vec<Vec<u8>>,
    /// Knock the client offline with a forged RST.
    pub rst_to_client: bool,
    /// Send the RST before the injection instead of after it.
    pub rst_first: bool,
}

/// What the tap saw and did; shared with the orchestrating scenario.
#[derive(Debug, Default)]
pub struct TapLog {
    pub observed: Vec<Segment>,
    /// Forged data segments actually placed on the link.
    pub injected: Vec<Segment>,
    pub rst_sent: bool,
    pub intel: Option<SessionIntel>,
}

/// On-path tap that records everything and optionally runs an [`AttackPlan`].
pub struct HijackTap {
    log: Rc<RefCell<TapLog>>,
    plan: Option<AttackPlan>,
    conn: Option<ConnectionId>,
    data_seen: u64,
    fired: bool,
}

impl HijackTap {
    /// A tap that only watches: the no-attack control.
    pub fn passive() -> (Self, Rc<RefCell<TapLog>>) {
        Self::build(None)
    }

    pub fn with_plan(plan: AttackPlan) -> (Self, Rc<RefCell<TapLog>>) {
        Self::build(Some(plan))
    }

    fn build(plan: Option<AttackPlan>) -> (Self, Rc<RefCell<TapLog>>) {
        let log = Rc::new(RefCell::new(TapLog::default()));
        (
            Self {
                log: log.clone(),
                plan,
                conn: None,
                data_seen: 0,
                fired: false,
            },
            log,
        )
    }

    /// Data segments are the PSH-flagged ones; handshake control and
    /// checkpoints don't count toward the trigger.
    fn is_forward_data(&self, seg: &Segment) -> bool {
        match &self.conn {
            Some(conn) => {
                conn.forward_matches(seg)
                    && seg.flags.contains(Flags::PSH)
                    && seg.window != CHECKPOINT_WINDOW
            }
            None => false,
        }
    }

    fn fire(&mut self) -> Vec<Segment> {
        let plan = self.plan.as_ref().expect("fire with a plan");
        let mut log = self.log.borrow_mut();
        let Ok(mut intel) = extract_session_intel(&log.observed) else {
            return Vec::new();
        };
        log.intel = Some(intel.clone());

        let mut forged = Vec::new();
        for payload in &plan.forged_payloads {
            let seg = forge_injection(&intel, payload);
            intel.next_seq = intel.next_seq.wrapping_add(payload.len() as u32);
            forged.push(seg);
        }
        log.injected = forged.clone();

        let rst = if plan.rst_to_client {
            log.rst_sent = true;
            Some(forge_rst(log.intel.as_ref().unwrap(), RstTarget::Client))
        } else {
            None
        };

        let mut out = Vec::new();
        if plan.rst_first {
            out.extend(rst.clone());
        }
        out.extend(forged);
        if !plan.rst_first {
            out.extend(rst);
        }
        out
    }
}

impl Tap for HijackTap {
    fn observe(&mut self, seg: &Segment) -> TapVerdict {
        self.log.borrow_mut().observed.push(seg.clone());
        if self.conn.is_none() && seg.flags.contains(Flags::SYN) && !seg.flags.contains(Flags::ACK)
        {
            self.conn = Some(ConnectionId::from_syn(seg));
        }

        if self.fired || self.plan.is_none() {
            return TapVerdict::pass();
        }
        if self.is_forward_data(seg) {
            self.data_seen += 1;
            if self.data_seen >= self.plan.as_ref().unwrap().trigger_after_data {
                self.fired = true;
                return TapVerdict {
                    deliver: true,
                    inject: self.fire(),
                };
            }
        }
        TapVerdict::pass()
    }
}
