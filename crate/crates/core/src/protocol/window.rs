//! Per-direction transcript accumulator for the every-W-packets HMAC
//! checkpoint.
//!
//! The transcript of a window is `render(ConnectionId) || ordinal(8 bytes,
//! big-endian) || payload_0 || payload_1 || ...`. Binding the 4-tuple ties
//! the checkpoint to the session identifiers; the window ordinal prevents a
//! valid checkpoint from one window being replayed against another.

use crate::crypto::{hmac_sha1, Digest};

use super::segment::ConnectionId;

#[derive(Debug, Clone)]
pub struct WindowVerifier {
    window: u32,
    counter: u32,
    ordinal: u64,
    prefix: Vec<u8>,
    transcript: Vec<u8>,
    hmac_count: u64,
}

impl WindowVerifier {
    /// `window` is the W of the scheme; must be at least 1.
    pub fn new(window: u32, conn: &ConnectionId) -> Self {
        assert!(window >= 1, "window value must be >= 1");
        let prefix = conn.render().into_bytes();
        let mut v = Self {
            window,
            counter: 0,
            ordinal: 0,
            prefix,
            transcript: Vec::new(),
            hmac_count: 0,
        };
        v.reset_transcript();
        v
    }

    fn reset_transcript(&mut self) {
        self.transcript.clear();
        self.transcript.extend_from_slice(&self.prefix);
        self.transcript
            .extend_from_slice(&self.ordinal.to_be_bytes());
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    /// Packets absorbed into the current window. Stays at `window` once the
    /// window is full, until [`advance`](Self::advance).
    pub fn counter(&self) -> u32 {
        self.counter
    }

    /// Index of the current window, starting at 0.
    pub fn ordinal(&self) -> u64 {
        self.ordinal
    }

    /// A full window has absorbed W packets and owes a checkpoint.
    pub fn is_full(&self) -> bool {
        self.counter >= self.window
    }

    /// Append one data payload to the window transcript. Returns true when
    /// this payload filled the window.
    pub fn absorb(&mut self, payload: &[u8]) -> bool {
        debug_assert!(!self.is_full(), "absorb into a full window");
        self.transcript.extend_from_slice(payload);
        self.counter += 1;
        self.is_full()
    }

    /// HMAC-SHA1 of the current window transcript.
    pub fn digest(&mut self, key: &[u8]) -> Digest {
        self.hmac_count += 1;
        hmac_sha1(key, &self.transcript)
    }

    /// Move to the next window: counter back to 0, transcript reset to the
    /// prefix and the new ordinal.
    pub fn advance(&mut self) {
        self.ordinal += 1;
        self.counter = 0;
        self.reset_transcript();
    }

    /// How many checkpoint digests this verifier has computed.
    pub fn hmac_count(&self) -> u64 {
        self.hmac_count
    }
}
