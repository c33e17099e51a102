//! The persisted record of everything that happened on the link: one JSON
//! object per line, in event order. This is the lab's packet capture.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::protocol::Segment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A host handed a frame to the link.
    Sent,
    /// The frame reached its destination and was processed.
    Delivered,
    /// The frame was suppressed by a drop rule or a tap.
    Dropped,
    /// A tap placed a forged frame on the link.
    Injected,
    /// An endpoint raised an integrity alarm (no frame attached).
    Alarm,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Sent => "sent",
            EventKind::Delivered => "delivered",
            EventKind::Dropped => "dropped",
            EventKind::Injected => "injected",
            EventKind::Alarm => "alarm",
        }
    }
}

/// One timestamped entry in the link transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEvent {
    /// Event counter; strictly increasing, unique per event.
    pub t: u64,
    pub kind: EventKind,
    /// Host name, or "attacker" for tap actions.
    pub actor: String,
    /// Absent for alarms.
    pub segment: Option<Segment>,
    pub note: String,
}

/// Wire form of one transcript line. Field order is part of the format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TranscriptLine {
    pub t: u64,
    pub kind: String,
    pub actor: String,
    pub src: Option<String>,
    pub dst: Option<String>,
    pub seq: Option<u32>,
    pub ack: Option<u32>,
    pub flags: Option<Vec<String>>,
    pub window: Option<u16>,
    pub ttl: Option<u8>,
    pub payload_hex: Option<String>,
    pub note: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl From<&TranscriptEvent> for TranscriptLine {
    fn from(event: &TranscriptEvent) -> Self {
        let seg = event.segment.as_ref();
        TranscriptLine {
            t: event.t,
            kind: event.kind.as_str().to_string(),
            actor: event.actor.clone(),
            src: seg.map(|s| s.src_addr().to_string()),
            dst: seg.map(|s| s.dst_addr().to_string()),
            seq: seg.map(|s| s.seq),
            ack: seg.map(|s| s.ack),
            flags: seg.map(|s| s.flags.names().into_iter().map(String::from).collect()),
            window: seg.map(|s| s.window),
            ttl: seg.map(|s| s.ttl),
            payload_hex: seg.map(|s| hex(&s.payload)),
            note: event.note.clone(),
        }
    }
}

/// Serialize the transcript as JSON lines.
pub fn write_transcript(events: &[TranscriptEvent], sink: &mut impl Write) -> io::Result<()> {
    for event in events {
        let line = TranscriptLine::from(event);
        serde_json::to_writer(&mut *sink, &line)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Render the transcript to a byte buffer; handy for determinism checks.
pub fn transcript_to_bytes(events: &[TranscriptEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_transcript(events, &mut buf).expect("write to Vec cannot fail");
    buf
}
