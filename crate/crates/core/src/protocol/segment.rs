//! Simplified TCP segment and its bit-exact wire encoding.

use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};

use super::ProtocolError;

bitflags::bitflags! {
    /// TCP-compatible flag bits; only these five are defined.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct Flags: u8 {
        const FIN = 0x01;
        const SYN = 0x02;
        const RST = 0x04;
        const PSH = 0x08;
        const ACK = 0x10;
    }
}

impl Flags {
    /// Flag names in bit order, e.g. `["SYN", "ACK"]` for 0x12.
    pub fn names(self) -> Vec<&'static str> {
        self.iter_names().map(|(name, _)| name).collect()
    }
}

/// Fixed part of the wire encoding: everything before the 2-byte payload
/// length.
pub const HEADER_LEN: usize = 24;

/// A segment on the simulated link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: Flags,
    pub window: u16,
    pub ttl: u8,
    pub payload: Vec<u8>,
}

impl Segment {
    pub fn src_addr(&self) -> SocketAddrV4 {
        SocketAddrV4::new(self.src_ip, self.src_port)
    }

    pub fn dst_addr(&self) -> SocketAddrV4 {
        SocketAddrV4::new(self.dst_ip, self.dst_port)
    }
}

/// The 4-tuple identifying a session on the link. Sequence and
/// acknowledgment numbers live in session state, not here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConnectionId {
    pub client: SocketAddrV4,
    pub server: SocketAddrV4,
}

impl ConnectionId {
    pub fn new(client: SocketAddrV4, server: SocketAddrV4) -> Self {
        Self { client, server }
    }

    /// Build from the opening SYN: source is the client.
    pub fn from_syn(seg: &Segment) -> Self {
        Self {
            client: seg.src_addr(),
            server: seg.dst_addr(),
        }
    }

    /// True when `seg` travels client-to-server on this connection.
    pub fn forward_matches(&self, seg: &Segment) -> bool {
        seg.src_addr() == self.client && seg.dst_addr() == self.server
    }

    /// True when `seg` travels server-to-client on this connection.
    pub fn reverse_matches(&self, seg: &Segment) -> bool {
        seg.src_addr() == self.server && seg.dst_addr() == self.client
    }

    /// Canonical rendering used as the integrity-transcript prefix.
    pub fn render(&self) -> String {
        format!("{}>{}", self.client, self.server)
    }
}

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Encode a segment: big-endian, fixed 24-byte header, then a 2-byte payload
/// length and the payload itself.
pub fn serialize_segment(seg: &Segment) -> Result<Vec<u8>, ProtocolError> {
    if seg.payload.len() > u16::MAX as usize {
        return Err(ProtocolError::OversizePayload(seg.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 2 + seg.payload.len());
    out.extend_from_slice(&seg.src_ip.octets());
    out.extend_from_slice(&seg.dst_ip.octets());
    out.extend_from_slice(&seg.src_port.to_be_bytes());
    out.extend_from_slice(&seg.dst_port.to_be_bytes());
    out.extend_from_slice(&seg.seq.to_be_bytes());
    out.extend_from_slice(&seg.ack.to_be_bytes());
    out.push(seg.flags.bits());
    out.extend_from_slice(&seg.window.to_be_bytes());
    out.push(seg.ttl);
    out.extend_from_slice(&(seg.payload.len() as u16).to_be_bytes());
    out.extend_from_slice(&seg.payload);
    Ok(out)
}

/// Inverse of [`serialize_segment`]. Exactly one segment per input; anything
/// short, long, or with undefined flag bits is an error.
pub fn parse_segment(bytes: &[u8]) -> Result<Segment, ProtocolError> {
    if bytes.len() < HEADER_LEN + 2 {
        return Err(ProtocolError::Truncated);
    }
    let ip = |i: usize| Ipv4Addr::new(bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]);
    let u16_at = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
    let u32_at =
        |i: usize| u32::from_be_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);

    let flags = Flags::from_bits(bytes[20]).ok_or(ProtocolError::UndefinedFlagBits(bytes[20]))?;
    let payload_len = u16_at(HEADER_LEN) as usize;
    let rest = &bytes[HEADER_LEN + 2..];
    if rest.len() < payload_len {
        return Err(ProtocolError::Truncated);
    }
    if rest.len() > payload_len {
        return Err(ProtocolError::TrailingBytes);
    }

    Ok(Segment {
        src_ip: ip(0),
        dst_ip: ip(4),
        src_port: u16_at(8),
        dst_port: u16_at(10),
        seq: u32_at(12),
        ack: u32_at(16),
        flags,
        window: u16_at(21),
        ttl: bytes[23],
        payload: rest.to_vec(),
    })
}
