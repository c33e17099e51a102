//! A deterministic single-process network: two endpoints on a duplex link,
//! an ordered list of on-path taps (the attacker's vantage point, standing in
//! for ARP poisoning), and a persisted transcript of every frame.
//!
//! There is no latency, loss, or reordering model. Frames are delivered in
//! the order they entered the link: except that frames injected by a tap cut
//! to the front of the queue, because an on-path attacker reacts to a frame
//! before anything behind it can arrive.

mod transcript;

pub use transcript::{
    transcript_to_bytes, write_transcript, EventKind, TranscriptEvent, TranscriptLine,
};

use std::collections::VecDeque;
use std::net::Ipv4Addr;

use crate::protocol::Segment;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown host '{0}'")]
    UnknownHost(String),
    #[error("host '{host}' cannot send from {src}")]
    SourceMismatch { host: String, src: Ipv4Addr },
    #[error("event budget exhausted after {0} frames (livelock?)")]
    MaxEventsExceeded(u64),
}

/// A named endpoint on the link.
#[derive(Debug, Clone)]
pub struct Host {
    pub name: String,
    pub ip: Ipv4Addr,
}

impl Host {
    pub fn new(name: &str, ip: Ipv4Addr) -> Self {
        Self {
            name: name.to_string(),
            ip,
        }
    }
}

/// What an endpoint does with a delivered frame.
pub struct Reaction {
    /// Segments to put on the link in response.
    pub out: Vec<Segment>,
    /// Annotation for the delivery event (e.g. the receipt outcome).
    pub note: Option<String>,
    /// Raise an alarm event after the delivery (integrity violations).
    pub alarm: Option<String>,
}

impl Reaction {
    pub fn nothing() -> Self {
        Self {
            out: Vec::new(),
            note: None,
            alarm: None,
        }
    }

    pub fn reply(out: Vec<Segment>) -> Self {
        Self {
            out,
            note: None,
            alarm: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn with_alarm(mut self, alarm: impl Into<String>) -> Self {
        self.alarm = Some(alarm.into());
        self
    }
}

/// An endpoint driver: a pure reaction from one delivered segment to zero or
/// more response segments.
pub trait Driver {
    fn on_segment(&mut self, seg: &Segment) -> Reaction;
}

/// What a tap decides about one observed frame.
pub struct TapVerdict {
    /// Deliver the observed frame (false = drop it).
    pub deliver: bool,
    /// Forged frames to place at the front of the link.
    pub inject: Vec<Segment>,
}

impl TapVerdict {
    pub fn pass() -> Self {
        Self {
            deliver: true,
            inject: Vec::new(),
        }
    }

    pub fn drop_frame() -> Self {
        Self {
            deliver: false,
            inject: Vec::new(),
        }
    }
}

/// An on-path observer with full visibility of both directions, able to
/// pass, drop, or inject frames. Forged source addresses are the point.
pub trait Tap {
    fn observe(&mut self, seg: &Segment) -> TapVerdict;

    /// Name recorded as the actor of drops/injections.
    fn actor(&self) -> &str {
        "attacker"
    }
}

struct InFlight {
    seg: Segment,
    origin: String,
}

type DropPredicate = Box<dyn Fn(&Segment) -> bool>;

struct DropRule {
    dst_host: String,
    id: String,
    predicate: DropPredicate,
}

/// The simulated duplex link between two hosts.
pub struct SimNet {
    hosts: [Host; 2],
    queue: VecDeque<InFlight>,
    taps: Vec<Box<dyn Tap>>,
    drop_rules: Vec<DropRule>,
    clock: u64,
    transcript: Vec<TranscriptEvent>,
    max_events: u64,
}

impl SimNet {
    pub fn new(a: Host, b: Host) -> Self {
        assert_ne!(a.ip, b.ip, "hosts need distinct addresses");
        Self {
            hosts: [a, b],
            queue: VecDeque::new(),
            taps: Vec::new(),
            drop_rules: Vec::new(),
            clock: 0,
            transcript: Vec::new(),
            max_events: 1_000_000,
        }
    }

    pub fn with_max_events(mut self, max_events: u64) -> Self {
        self.max_events = max_events;
        self
    }

    /// Attach an on-path tap; returns its position in the tap chain.
    pub fn attach_tap(&mut self, tap: Box<dyn Tap>) -> usize {
        self.taps.push(tap);
        self.taps.len() - 1
    }

    /// Suppress delivery of frames addressed to `dst_host` that match the
    /// predicate.
    pub fn add_drop_rule(
        &mut self,
        dst_host: &str,
        id: &str,
        predicate: DropPredicate,
    ) -> Result<(), SimError> {
        if !self.hosts.iter().any(|h| h.name == dst_host) {
            return Err(SimError::UnknownHost(dst_host.to_string()));
        }
        self.drop_rules.push(DropRule {
            dst_host: dst_host.to_string(),
            id: id.to_string(),
            predicate,
        });
        Ok(())
    }

    pub fn host(&self, name: &str) -> Option<&Host> {
        self.hosts.iter().find(|h| h.name == name)
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    fn record(&mut self, kind: EventKind, actor: &str, segment: Option<Segment>, note: String) {
        let t = self.clock;
        self.clock += 1;
        self.transcript.push(TranscriptEvent {
            t,
            kind,
            actor: actor.to_string(),
            segment,
            note,
        });
    }

    /// Put a frame on the link on behalf of `from`. The source address must
    /// belong to the sending host; only taps may forge.
    pub fn send(&mut self, from: &str, seg: Segment) -> Result<(), SimError> {
        let host = self
            .host(from)
            .ok_or_else(|| SimError::UnknownHost(from.to_string()))?
            .clone();
        if seg.src_ip != host.ip {
            return Err(SimError::SourceMismatch {
                host: host.name,
                src: seg.src_ip,
            });
        }
        self.record(
            EventKind::Sent,
            &host.name,
            Some(seg.clone()),
            String::new(),
        );
        self.queue.push_back(InFlight {
            seg,
            origin: host.name,
        });
        Ok(())
    }

    fn route(&self, seg: &Segment) -> Option<usize> {
        self.hosts.iter().position(|h| h.ip == seg.dst_ip)
    }

    /// Process the link to quiescence, driving `driver_a` for the first host
    /// and `driver_b` for the second. Deterministic: the same queue, taps,
    /// and drivers produce the same transcript.
    pub fn run_until_idle(
        &mut self,
        driver_a: &mut dyn Driver,
        driver_b: &mut dyn Driver,
    ) -> Result<(), SimError> {
        let mut processed: u64 = 0;
        while let Some(frame) = self.queue.pop_front() {
            processed += 1;
            if processed > self.max_events {
                return Err(SimError::MaxEventsExceeded(self.max_events));
            }

            // Every tap sees every frame, including ones a rule then drops.
            let mut deliver = true;
            let mut injections: Vec<(String, Segment)> = Vec::new();
            let mut taps = std::mem::take(&mut self.taps);
            for tap in taps.iter_mut() {
                let verdict = tap.observe(&frame.seg);
                if !verdict.deliver {
                    deliver = false;
                }
                for seg in verdict.inject {
                    injections.push((tap.actor().to_string(), seg));
                }
            }
            self.taps = taps;

            for (actor, seg) in &injections {
                self.record(EventKind::Injected, actor, Some(seg.clone()), String::new());
            }
            // Injected frames cut the line, preserving their own order.
            for (actor, seg) in injections.into_iter().rev() {
                self.queue.push_front(InFlight { seg, origin: actor });
            }

            if !deliver {
                self.record(
                    EventKind::Dropped,
                    "attacker",
                    Some(frame.seg),
                    "dropped by tap".into(),
                );
                continue;
            }

            if let Some(rule_id) = self.matching_drop_rule(&frame.seg) {
                self.record(
                    EventKind::Dropped,
                    &frame.origin.clone(),
                    Some(frame.seg),
                    format!("drop_rule:{rule_id}"),
                );
                continue;
            }

            let Some(dst) = self.route(&frame.seg) else {
                self.record(
                    EventKind::Dropped,
                    &frame.origin.clone(),
                    Some(frame.seg),
                    "no route".into(),
                );
                continue;
            };

            let driver: &mut dyn Driver = if dst == 0 { driver_a } else { driver_b };
            let reaction = driver.on_segment(&frame.seg);
            let dst_name = self.hosts[dst].name.clone();
            self.record(
                EventKind::Delivered,
                &dst_name,
                Some(frame.seg),
                reaction.note.unwrap_or_default(),
            );
            if let Some(alarm) = reaction.alarm {
                self.record(EventKind::Alarm, &dst_name, None, alarm);
            }
            for seg in reaction.out {
                self.send(&dst_name, seg)?;
            }
        }
        Ok(())
    }

    fn matching_drop_rule(&self, seg: &Segment) -> Option<String> {
        let dst = self.route(seg)?;
        let dst_name = &self.hosts[dst].name;
        self.drop_rules
            .iter()
            .find(|r| &r.dst_host == dst_name && (r.predicate)(seg))
            .map(|r| r.id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Flags;
    use std::cell::RefCell;
    use std::rc::Rc;

    fn ip(last: u8) -> Ipv4Addr {
        Ipv4Addr::new(10, 0, 0, last)
    }

    fn seg(from: u8, to: u8, seq: u32) -> Segment {
        Segment {
            src_ip: ip(from),
            dst_ip: ip(to),
            src_port: 1000,
            dst_port: 2000,
            seq,
            ack: 0,
            flags: Flags::ACK,
            window: 512,
            ttl: 64,
            payload: vec![seq as u8],
        }
    }

    fn net() -> SimNet {
        SimNet::new(Host::new("alice", ip(1)), Host::new("bob", ip(2)))
    }

    type Seen = Rc<RefCell<Vec<Segment>>>;

    /// Replies to the first `echoes` frames with an acknowledgment frame.
    struct EchoDriver {
        me: u8,
        peer: u8,
        echoes: u32,
        seen: Seen,
    }

    impl Driver for EchoDriver {
        fn on_segment(&mut self, s: &Segment) -> Reaction {
            self.seen.borrow_mut().push(s.clone());
            if self.echoes > 0 {
                self.echoes -= 1;
                Reaction::reply(vec![seg(self.me, self.peer, s.seq + 1)]).with_note("echoed")
            } else {
                Reaction::nothing().with_note("sunk")
            }
        }
    }

    struct Quiet;
    impl Driver for Quiet {
        fn on_segment(&mut self, _seg: &Segment) -> Reaction {
            Reaction::nothing()
        }
    }

    fn drivers(echoes_a: u32, echoes_b: u32) -> (EchoDriver, EchoDriver, Seen, Seen) {
        let seen_a = Rc::new(RefCell::new(Vec::new()));
        let seen_b = Rc::new(RefCell::new(Vec::new()));
        (
            EchoDriver {
                me: 1,
                peer: 2,
                echoes: echoes_a,
                seen: seen_a.clone(),
            },
            EchoDriver {
                me: 2,
                peer: 1,
                echoes: echoes_b,
                seen: seen_b.clone(),
            },
            seen_a,
            seen_b,
        )
    }

    #[test]
    fn frames_deliver_exactly_once_in_order() {
        let mut net = net();
        net.send("alice", seg(1, 2, 10)).unwrap();
        net.send("alice", seg(1, 2, 20)).unwrap();
        let (mut a, mut b, _, seen_b) = drivers(0, 0);
        net.run_until_idle(&mut a, &mut b).unwrap();

        let seqs: Vec<u32> = seen_b.borrow().iter().map(|s| s.seq).collect();
        assert_eq!(seqs, vec![10, 20]);
        let delivered = net
            .transcript()
            .iter()
            .filter(|e| e.kind == EventKind::Delivered)
            .count();
        assert_eq!(delivered, 2);
    }

    #[test]
    fn unknown_host_and_forged_source_rejected() {
        let mut net = net();
        assert!(matches!(
            net.send("mallory", seg(1, 2, 1)),
            Err(SimError::UnknownHost(_))
        ));
        assert!(matches!(
            net.send("alice", seg(2, 1, 1)),
            Err(SimError::SourceMismatch { .. })
        ));
    }

    #[test]
    fn drop_rule_suppresses_delivery() {
        let mut net = net();
        net.add_drop_rule("bob", "odd-seqs", Box::new(|s| s.seq % 2 == 1))
            .unwrap();
        net.send("alice", seg(1, 2, 1)).unwrap();
        net.send("alice", seg(1, 2, 2)).unwrap();
        let (mut a, mut b, _, seen_b) = drivers(0, 0);
        net.run_until_idle(&mut a, &mut b).unwrap();

        assert_eq!(seen_b.borrow().len(), 1);
        let dropped: Vec<&TranscriptEvent> = net
            .transcript()
            .iter()
            .filter(|e| e.kind == EventKind::Dropped)
            .collect();
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].note, "drop_rule:odd-seqs");
    }

    struct PassiveTap {
        observed: Rc<RefCell<Vec<Segment>>>,
    }
    impl Tap for PassiveTap {
        fn observe(&mut self, seg: &Segment) -> TapVerdict {
            self.observed.borrow_mut().push(seg.clone());
            TapVerdict::pass()
        }
    }

    struct DropAllTap;
    impl Tap for DropAllTap {
        fn observe(&mut self, _seg: &Segment) -> TapVerdict {
            TapVerdict::drop_frame()
        }
    }

    /// Injects one forged frame right after the first frame it sees.
    struct OneShotInjector {
        fired: bool,
    }
    impl Tap for OneShotInjector {
        fn observe(&mut self, _seg: &Segment) -> TapVerdict {
            if self.fired {
                return TapVerdict::pass();
            }
            self.fired = true;
            TapVerdict {
                deliver: true,
                inject: vec![seg(1, 2, 999)],
            }
        }
    }

    #[test]
    fn passive_tap_does_not_change_the_transcript() {
        let run = |with_tap: bool| {
            let mut net = net();
            if with_tap {
                net.attach_tap(Box::new(PassiveTap {
                    observed: Rc::new(RefCell::new(Vec::new())),
                }));
            }
            net.send("alice", seg(1, 2, 5)).unwrap();
            let (mut a, mut b, _, _) = drivers(0, 3);
            net.run_until_idle(&mut a, &mut b).unwrap();
            transcript_to_bytes(net.transcript())
        };
        assert_eq!(run(false), run(true));
    }

    #[test]
    fn passive_tap_sees_delivered_plus_dropped() {
        let observed = Rc::new(RefCell::new(Vec::new()));
        let mut net = net();
        net.attach_tap(Box::new(PassiveTap {
            observed: observed.clone(),
        }));
        net.add_drop_rule("bob", "all", Box::new(|_| true)).unwrap();
        net.send("alice", seg(1, 2, 1)).unwrap();
        net.send("bob", seg(2, 1, 2)).unwrap();
        let (mut a, mut b, _, _) = drivers(0, 0);
        net.run_until_idle(&mut a, &mut b).unwrap();

        // Tap completeness: it saw exactly the delivered and dropped frames.
        let disposed = net
            .transcript()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Delivered | EventKind::Dropped))
            .count();
        assert_eq!(observed.borrow().len(), disposed);
        assert_eq!(observed.borrow().len(), 2);
    }

    #[test]
    fn drop_all_tap_delivers_nothing() {
        let mut net = net();
        net.attach_tap(Box::new(DropAllTap));
        net.send("alice", seg(1, 2, 1)).unwrap();
        net.send("alice", seg(1, 2, 2)).unwrap();
        let (mut a, mut b, _, seen_b) = drivers(0, 0);
        net.run_until_idle(&mut a, &mut b).unwrap();
        assert!(seen_b.borrow().is_empty());
        assert!(net
            .transcript()
            .iter()
            .all(|e| e.kind != EventKind::Delivered));
    }

    #[test]
    fn injected_frames_cut_the_line_and_are_recorded() {
        let mut net = net();
        net.attach_tap(Box::new(OneShotInjector { fired: false }));
        net.send("alice", seg(1, 2, 10)).unwrap();
        net.send("alice", seg(1, 2, 20)).unwrap();
        let (mut a, mut b, _, seen_b) = drivers(0, 0);
        net.run_until_idle(&mut a, &mut b).unwrap();

        // Forged 999 was injected while 20 was still queued.
        let seqs: Vec<u32> = seen_b.borrow().iter().map(|s| s.seq).collect();
        assert_eq!(seqs, vec![10, 999, 20]);
        let injected: Vec<&TranscriptEvent> = net
            .transcript()
            .iter()
            .filter(|e| e.kind == EventKind::Injected)
            .collect();
        assert_eq!(injected.len(), 1);
        assert_eq!(injected[0].actor, "attacker");
    }

    #[test]
    fn conservation_every_frame_disposed_exactly_once() {
        let mut net = net();
        net.attach_tap(Box::new(OneShotInjector { fired: false }));
        net.add_drop_rule("alice", "half", Box::new(|s| s.seq % 2 == 0))
            .unwrap();
        for i in 0..10 {
            net.send("alice", seg(1, 2, i)).unwrap();
        }
        let (mut a, mut b, _, _) = drivers(3, 5);
        net.run_until_idle(&mut a, &mut b).unwrap();

        let count = |kind: EventKind| net.transcript().iter().filter(|e| e.kind == kind).count();
        assert_eq!(
            count(EventKind::Sent) + count(EventKind::Injected),
            count(EventKind::Delivered) + count(EventKind::Dropped)
        );
    }

    #[test]
    fn clock_strictly_increases() {
        let mut net = net();
        for i in 0..5 {
            net.send("alice", seg(1, 2, i)).unwrap();
        }
        let (mut a, mut b, _, _) = drivers(0, 2);
        net.run_until_idle(&mut a, &mut b).unwrap();
        let ts: Vec<u64> = net.transcript().iter().map(|e| e.t).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn identical_runs_serialize_identically() {
        let run = || {
            let mut net = net();
            net.send("alice", seg(1, 2, 1)).unwrap();
            let (mut a, mut b, _, _) = drivers(2, 2);
            net.run_until_idle(&mut a, &mut b).unwrap();
            transcript_to_bytes(net.transcript())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn max_events_guard_aborts_livelock() {
        struct Forever;
        impl Driver for Forever {
            fn on_segment(&mut self, s: &Segment) -> Reaction {
                let from = if s.dst_ip == ip(1) { 1 } else { 2 };
                let to = if from == 1 { 2 } else { 1 };
                Reaction::reply(vec![seg(from, to, s.seq + 1)])
            }
        }
        let mut net = net().with_max_events(100);
        net.send("alice", seg(1, 2, 0)).unwrap();
        let err = net.run_until_idle(&mut Forever, &mut Forever);
        assert!(matches!(err, Err(SimError::MaxEventsExceeded(100))));
        // Partial transcript survives the abort.
        assert!(net.transcript().len() >= 100);
    }

    #[test]
    fn no_route_frames_dropped() {
        let mut net = net();
        net.send("alice", seg(1, 77, 1)).unwrap();
        net.run_until_idle(&mut Quiet, &mut Quiet).unwrap();
        let last = net.transcript().last().unwrap();
        assert_eq!(last.kind, EventKind::Dropped);
        assert_eq!(last.note, "no route");
    }
}
