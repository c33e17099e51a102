//! The segment wire format and the two handshake state machines: a plain
//! RFC-style three-way handshake, and the secured variant that carries an
//! RSA-wrapped DH exchange, a signed server public value, an HMAC-SHA1
//! third-handshake authenticator, and windowed integrity checkpoints over
//! the established session.

mod segment;
mod session;
mod window;

pub use segment::{parse_segment, serialize_segment, ConnectionId, Flags, Segment, HEADER_LEN};
pub use session::{
    ClientSession, EstablishOutcome, FixedDh, Mode, Receipt, SecureConfig, ServerSession,
    SessionState, CHECKPOINT_WINDOW, DEFAULT_TTL,
};
pub use window::WindowVerifier;

use crate::crypto::CryptoError;

/// Errors from the wire codec and the session state machines.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    /// Payload longer than the 16-bit length field can carry.
    #[error("payload too large for wire format ({0} bytes)")]
    OversizePayload(usize),
    /// Input ended before the fixed header or declared payload.
    #[error("segment truncated")]
    Truncated,
    /// The flags byte uses bits outside FIN/SYN/RST/PSH/ACK.
    #[error("undefined flag bits 0x{0:02x}")]
    UndefinedFlagBits(u8),
    /// Bytes left over after the declared payload.
    #[error("trailing bytes after payload")]
    TrailingBytes,
    /// An operation was driven in a state it is not defined for.
    #[error("{op} invalid in state {state:?}")]
    InvalidState {
        op: &'static str,
        state: SessionState,
    },
    /// The configuration cannot express the requested handshake.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
