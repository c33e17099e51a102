//! Client and server handshake state machines plus the established-phase
//! windowed-checkpoint data transfer.
//!
//! Acknowledgment numbering differs by mode, on purpose:
//!
//! * plain mode follows RFC convention: the SYN consumes one sequence
//!   number, SYN|ACK acks J+1, the final ACK acks I+1;
//! * secured mode is literal to the hardened scheme: the SYN|ACK carries
//!   ack = J and the final ACK carries ack = I, and the handshake consumes
//!   no sequence numbers.
//!
//! Data segments consume their payload length in both modes. Checkpoint
//! segments are pure control: they consume nothing and are marked by a
//! window field of 0xFFFF rather than a new flag bit.

use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;

use crate::crypto::{
    decode_handshake_payload, dh_public, dh_shared, encode_handshake_payload, generate_prime,
    hmac_sha1, random_in_range, rsa_decrypt, rsa_encrypt, rsa_recover, rsa_sign_recoverable,
    session_key_bytes, DhParams, Digest, RsaPrivateKey, RsaPublicKey,
};

use super::segment::{ConnectionId, Flags, Segment};
use super::window::WindowVerifier;
use super::ProtocolError;

/// Window-field marker distinguishing integrity checkpoints from data.
pub const CHECKPOINT_WINDOW: u16 = 0xffff;
/// TTL stamped on every locally generated segment.
pub const DEFAULT_TTL: u8 = 128;
/// Advertised window on ordinary data segments. Carried but not interpreted.
const DATA_WINDOW: u16 = 8192;

/// Which handshake the endpoints speak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Plain,
    Secured,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Plain => f.write_str("plain"),
            Mode::Secured => f.write_str("secured"),
        }
    }
}

/// Pinned DH material for reproducing the reference exchange exactly.
#[derive(Debug, Clone)]
pub struct FixedDh {
    pub p: BigUint,
    pub g: BigUint,
    pub client_private: BigUint,
    pub server_private: BigUint,
}

impl FixedDh {
    /// The worked example: p=97, g=5, XC=36, XS=58.
    pub fn reference() -> Self {
        Self {
            p: BigUint::from(97u32),
            g: BigUint::from(5u32),
            client_private: BigUint::from(36u32),
            server_private: BigUint::from(58u32),
        }
    }
}

/// Shared protocol configuration for one endpoint.
///
/// Key material is asymmetric by construction: the client's copy carries
/// only the server's public key, the server's copy carries the private key
/// too (standing in for out-of-band certificate distribution).
#[derive(Debug, Clone)]
pub struct SecureConfig {
    pub mode: Mode,
    /// W: data packets between integrity checkpoints.
    pub window: u32,
    /// Bit width of the DH prime when parameters are drawn at random.
    pub dh_prime_bits: u32,
    /// Pin (p, g, XC, XS) instead of drawing them.
    pub fixed_dh: Option<FixedDh>,
    /// The mutual-authentication message of the third handshake.
    pub auth_message: Vec<u8>,
    pub server_public: Option<RsaPublicKey>,
    pub server_private: Option<RsaPrivateKey>,
}

impl SecureConfig {
    pub fn plain() -> Self {
        Self {
            mode: Mode::Plain,
            window: 100,
            dh_prime_bits: 16,
            fixed_dh: None,
            auth_message: b"message".to_vec(),
            server_public: None,
            server_private: None,
        }
    }

    /// Secured-mode config as the client sees it: S+ only.
    pub fn secured_client(server_public: RsaPublicKey) -> Self {
        Self {
            mode: Mode::Secured,
            server_public: Some(server_public),
            ..Self::plain()
        }
    }

    /// Secured-mode config as the server sees it: the full key pair.
    pub fn secured_server(server_public: RsaPublicKey, server_private: RsaPrivateKey) -> Self {
        Self {
            mode: Mode::Secured,
            server_public: Some(server_public),
            server_private: Some(server_private),
            ..Self::plain()
        }
    }

    pub fn with_window(mut self, window: u32) -> Self {
        assert!(window >= 1, "window value must be >= 1");
        self.window = window;
        self
    }

    pub fn with_fixed_dh(mut self, fixed: FixedDh) -> Self {
        self.fixed_dh = Some(fixed);
        self
    }

    pub fn with_auth_message(mut self, msg: Vec<u8>) -> Self {
        self.auth_message = msg;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Closed,
    SynSent,
    SynRcvd,
    Established,
    Failed,
    Reset,
}

/// Result of driving the server with the third handshake segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstablishOutcome {
    Established,
    Failed,
    Ignored,
}

/// Outcome of feeding one established-phase segment to a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Receipt {
    /// Data taken (provisionally, in secured mode) at the expected sequence.
    Accepted(Vec<u8>),
    /// Checkpoint digest matched the local transcript; window committed.
    CheckpointOk,
    /// Checkpoint digest mismatched, or more data arrived than a window can
    /// legally hold: the session is torn down.
    CheckpointFail,
    /// Segment does not belong to this session, or the session is not
    /// established; the segment is discarded.
    Rejected(&'static str),
}

/// Established-phase machinery common to both endpoints.
#[derive(Debug, Clone)]
struct Flow {
    conn: ConnectionId,
    am_client: bool,
    next_send_seq: u32,
    peer_next_seq: Option<u32>,
    session_key: Option<BigUint>,
    send_window: WindowVerifier,
    recv_window: WindowVerifier,
    /// Payloads of the current receive window, not yet covered by a
    /// checkpoint (secured mode only).
    staged: Vec<Vec<u8>>,
    /// Payloads that passed all verification this session.
    accepted: Vec<Vec<u8>>,
    /// Payloads discarded when a checkpoint failed, kept as evidence.
    quarantined: Vec<Vec<u8>>,
}

impl Flow {
    fn new(conn: ConnectionId, am_client: bool, window: u32) -> Self {
        Self {
            conn,
            am_client,
            next_send_seq: 0,
            peer_next_seq: None,
            session_key: None,
            send_window: WindowVerifier::new(window, &conn),
            recv_window: WindowVerifier::new(window, &conn),
            staged: Vec::new(),
            accepted: Vec::new(),
            quarantined: Vec::new(),
        }
    }

    fn my_addr(&self) -> std::net::SocketAddrV4 {
        if self.am_client {
            self.conn.client
        } else {
            self.conn.server
        }
    }

    fn peer_addr(&self) -> std::net::SocketAddrV4 {
        if self.am_client {
            self.conn.server
        } else {
            self.conn.client
        }
    }

    fn inbound_matches(&self, seg: &Segment) -> bool {
        if self.am_client {
            self.conn.reverse_matches(seg)
        } else {
            self.conn.forward_matches(seg)
        }
    }

    fn outbound(&self, flags: Flags, seq: u32, ack: u32, window: u16, payload: Vec<u8>) -> Segment {
        let (src, dst) = (self.my_addr(), self.peer_addr());
        Segment {
            src_ip: *src.ip(),
            dst_ip: *dst.ip(),
            src_port: src.port(),
            dst_port: dst.port(),
            seq,
            ack,
            flags,
            window,
            ttl: DEFAULT_TTL,
            payload,
        }
    }

    fn auth_key(&self) -> Vec<u8> {
        session_key_bytes(self.session_key.as_ref().expect("secured session key"))
    }

    fn rst_to_peer(&self) -> Segment {
        self.outbound(Flags::RST, self.next_send_seq, 0, 0, Vec::new())
    }

    fn tear_down(&mut self, state: &mut SessionState) -> (Receipt, Option<Segment>) {
        *state = SessionState::Failed;
        self.quarantined.append(&mut self.staged);
        (Receipt::CheckpointFail, Some(self.rst_to_peer()))
    }

    fn send_data(
        &mut self,
        state: &SessionState,
        cfg: &SecureConfig,
        payload: &[u8],
    ) -> Result<Vec<Segment>, ProtocolError> {
        if *state != SessionState::Established {
            return Err(ProtocolError::InvalidState {
                op: "send_data",
                state: *state,
            });
        }
        let ack = self.peer_next_seq.unwrap_or(0);
        let data = self.outbound(
            Flags::PSH | Flags::ACK,
            self.next_send_seq,
            ack,
            DATA_WINDOW,
            payload.to_vec(),
        );
        self.next_send_seq = self.next_send_seq.wrapping_add(payload.len() as u32);
        let mut out = vec![data];
        if cfg.mode == Mode::Secured && self.send_window.absorb(payload) {
            let digest = self.send_window.digest(&self.auth_key());
            out.push(self.outbound(
                Flags::ACK,
                self.next_send_seq,
                ack,
                CHECKPOINT_WINDOW,
                digest.as_bytes().to_vec(),
            ));
            self.send_window.advance();
        }
        Ok(out)
    }

    fn recv_data(
        &mut self,
        state: &mut SessionState,
        cfg: &SecureConfig,
        seg: &Segment,
    ) -> (Receipt, Option<Segment>) {
        if *state != SessionState::Established {
            return (Receipt::Rejected("not-established"), None);
        }
        if !self.inbound_matches(seg) {
            return (Receipt::Rejected("out-of-session"), None);
        }

        if cfg.mode == Mode::Secured && seg.window == CHECKPOINT_WINDOW {
            // Checkpoints consume no sequence numbers and are matched by the
            // transcript digest alone: a forged data segment desynchronizes
            // the sequence space, and the checkpoint must still get through
            // to prove it.
            let expected = self.recv_window.digest(&self.auth_key());
            if seg.payload.as_slice() == expected.as_bytes() {
                self.accepted.append(&mut self.staged);
                self.recv_window.advance();
                return (Receipt::CheckpointOk, None);
            }
            return self.tear_down(state);
        }

        if seg.seq != self.peer_next_seq.expect("established peer seq") {
            return (Receipt::Rejected("out-of-session"), None);
        }
        if cfg.mode == Mode::Secured && self.recv_window.is_full() {
            // A full window owes a checkpoint; more in-sequence data before
            // it can only come from an injector.
            return self.tear_down(state);
        }
        self.peer_next_seq = Some(
            self.peer_next_seq
                .unwrap()
                .wrapping_add(seg.payload.len() as u32),
        );
        match cfg.mode {
            Mode::Secured => {
                self.staged.push(seg.payload.clone());
                self.recv_window.absorb(&seg.payload);
            }
            Mode::Plain => self.accepted.push(seg.payload.clone()),
        }
        (Receipt::Accepted(seg.payload.clone()), None)
    }

    fn on_rst(&mut self, state: &mut SessionState, seg: &Segment) -> bool {
        if !seg.flags.contains(Flags::RST) || !self.inbound_matches(seg) {
            return false;
        }
        if matches!(
            *state,
            SessionState::Failed | SessionState::Reset | SessionState::Closed
        ) {
            return false;
        }
        // Before the peer's initial sequence number is known, any
        // tuple-matching RST lands.
        if let Some(expected) = self.peer_next_seq {
            if seg.seq != expected {
                return false;
            }
        }
        *state = SessionState::Reset;
        true
    }
}

/// Secured-handshake scratch held by the client between SYN and SYN|ACK.
#[derive(Debug, Clone)]
struct ClientDh {
    params: DhParams,
    private: BigUint,
    public: BigUint,
}

/// Server-side DH material, fixed at the second handshake.
#[derive(Debug, Clone)]
struct ServerDh {
    params: DhParams,
    public: BigUint,
    peer_public: BigUint,
    key: BigUint,
}

pub struct ClientSession {
    state: SessionState,
    flow: Flow,
    isn: u32,
    dh: Option<ClientDh>,
    peer_public: Option<BigUint>,
    auth_digest: Option<Digest>,
}

pub struct ServerSession {
    state: SessionState,
    flow: Flow,
    isn: u32,
    dh: Option<ServerDh>,
    auth_digest: Option<Digest>,
}

impl ClientSession {
    /// First handshake: emit the SYN. In secured mode the payload is
    /// C = RSA(S+, encode(p$g$YC)) rendered big-endian.
    pub fn start(
        cfg: &SecureConfig,
        conn: ConnectionId,
        rng: &mut impl RngCore,
    ) -> Result<(Self, Segment), ProtocolError> {
        let isn = rng.next_u32();
        let mut flow = Flow::new(conn, true, cfg.window);
        let mut dh = None;

        let payload = match cfg.mode {
            Mode::Plain => {
                // SYN consumes one sequence number.
                flow.next_send_seq = isn.wrapping_add(1);
                Vec::new()
            }
            Mode::Secured => {
                let server_public = cfg.server_public.as_ref().ok_or_else(|| {
                    ProtocolError::Config("secured client needs the server public key".into())
                })?;
                let (params, private) = match &cfg.fixed_dh {
                    Some(fixed) => (
                        DhParams::new(fixed.p.clone(), fixed.g.clone())?,
                        fixed.client_private.clone(),
                    ),
                    None => {
                        let p = generate_prime(cfg.dh_prime_bits, rng);
                        let g = random_in_range(rng, &BigUint::from(2u32), &p);
                        let x = random_in_range(rng, &BigUint::one(), &p);
                        (DhParams::new(p, g)?, x)
                    }
                };
                let public = dh_public(&params, &private)?;
                let encoded = encode_handshake_payload(params.p(), params.g(), &public);
                if &encoded >= server_public.n() {
                    return Err(ProtocolError::Config(
                        "DH payload exceeds the RSA modulus; use a larger RSA key or a smaller prime"
                            .into(),
                    ));
                }
                let ciphertext = rsa_encrypt(server_public, &encoded)?;
                dh = Some(ClientDh {
                    params,
                    private,
                    public,
                });
                flow.next_send_seq = isn; // handshake consumes nothing
                ciphertext.to_bytes_be()
            }
        };

        let seg = flow.outbound(Flags::SYN, isn, 0, DATA_WINDOW, payload);
        Ok((
            Self {
                state: SessionState::SynSent,
                flow,
                isn,
                dh,
                peer_public: None,
                auth_digest: None,
            },
            seg,
        ))
    }

    /// Third handshake. Returns the ACK segment, or None when the input was
    /// discarded (check `state()` to distinguish a discard from a failure).
    pub fn on_synack(
        &mut self,
        cfg: &SecureConfig,
        seg: &Segment,
    ) -> Result<Option<Segment>, ProtocolError> {
        if self.state != SessionState::SynSent {
            return Err(ProtocolError::InvalidState {
                op: "on_synack",
                state: self.state,
            });
        }
        if !self.flow.inbound_matches(seg) {
            return Ok(None);
        }

        match cfg.mode {
            Mode::Plain => {
                let expected_ack = self.isn.wrapping_add(1);
                if !seg.flags.contains(Flags::SYN | Flags::ACK) || seg.ack != expected_ack {
                    return Ok(None);
                }
                self.flow.peer_next_seq = Some(seg.seq.wrapping_add(1));
                let reply = self.flow.outbound(
                    Flags::ACK,
                    expected_ack,
                    seg.seq.wrapping_add(1),
                    DATA_WINDOW,
                    Vec::new(),
                );
                self.state = SessionState::Established;
                Ok(Some(reply))
            }
            Mode::Secured => {
                // Literal checks: ACK set, ack equals J.
                if !seg.flags.contains(Flags::ACK) || seg.ack != self.isn {
                    return Ok(None);
                }
                let server_public = cfg.server_public.as_ref().ok_or_else(|| {
                    ProtocolError::Config("secured client needs the server public key".into())
                })?;
                let dh = self.dh.as_ref().expect("secured client has DH scratch");

                let signature = BigUint::from_bytes_be(&seg.payload);
                if &signature >= server_public.n() {
                    self.state = SessionState::Failed;
                    return Ok(None);
                }
                let peer_public = rsa_recover(server_public, &signature)?;
                if peer_public < BigUint::one() || &peer_public >= dh.params.p() {
                    // Recovered value cannot be a DH public value: tampering.
                    self.state = SessionState::Failed;
                    return Ok(None);
                }
                let key = dh_shared(&dh.params, &peer_public, &dh.private)?;
                let digest = hmac_sha1(&session_key_bytes(&key), &cfg.auth_message);

                self.flow.peer_next_seq = Some(seg.seq);
                self.flow.session_key = Some(key);
                self.peer_public = Some(peer_public);
                self.auth_digest = Some(digest);
                let reply = self.flow.outbound(
                    Flags::ACK,
                    self.isn,
                    seg.seq,
                    DATA_WINDOW,
                    digest.as_bytes().to_vec(),
                );
                self.state = SessionState::Established;
                Ok(Some(reply))
            }
        }
    }

    pub fn send_data(
        &mut self,
        cfg: &SecureConfig,
        payload: &[u8],
    ) -> Result<Vec<Segment>, ProtocolError> {
        self.flow.send_data(&self.state, cfg, payload)
    }

    pub fn recv_data(&mut self, cfg: &SecureConfig, seg: &Segment) -> (Receipt, Option<Segment>) {
        self.flow.recv_data(&mut self.state, cfg, seg)
    }

    pub fn on_rst(&mut self, seg: &Segment) -> bool {
        self.flow.on_rst(&mut self.state, seg)
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn conn(&self) -> &ConnectionId {
        &self.flow.conn
    }

    pub fn isn(&self) -> u32 {
        self.isn
    }

    pub fn session_key(&self) -> Option<&BigUint> {
        self.flow.session_key.as_ref()
    }

    pub fn dh_params(&self) -> Option<&DhParams> {
        self.dh.as_ref().map(|d| &d.params)
    }

    /// YC.
    pub fn dh_public_value(&self) -> Option<&BigUint> {
        self.dh.as_ref().map(|d| &d.public)
    }

    /// YS as recovered from the server's signature.
    pub fn peer_public_value(&self) -> Option<&BigUint> {
        self.peer_public.as_ref()
    }

    /// The third-handshake HMAC this client computed.
    pub fn auth_digest(&self) -> Option<&Digest> {
        self.auth_digest.as_ref()
    }

    pub fn accepted_payloads(&self) -> &[Vec<u8>] {
        &self.flow.accepted
    }

    pub fn quarantined_payloads(&self) -> &[Vec<u8>] {
        &self.flow.quarantined
    }

    pub fn send_hmac_count(&self) -> u64 {
        self.flow.send_window.hmac_count()
    }

    pub fn recv_hmac_count(&self) -> u64 {
        self.flow.recv_window.hmac_count()
    }

    /// Ordinal of the receive window currently being accumulated.
    pub fn recv_window_ordinal(&self) -> u64 {
        self.flow.recv_window.ordinal()
    }
}

impl ServerSession {
    /// Second handshake: decrypt and decode the client's DH offer, derive
    /// the session key, sign YS, and answer SYN|ACK. Any failure to make
    /// sense of the payload is treated as tampering: the handshake is
    /// rejected with no reply.
    pub fn on_syn(
        cfg: &SecureConfig,
        seg: &Segment,
        rng: &mut impl RngCore,
    ) -> Result<(Self, Option<Segment>), ProtocolError> {
        if !seg.flags.contains(Flags::SYN) || seg.flags.contains(Flags::ACK) {
            return Err(ProtocolError::InvalidState {
                op: "on_syn",
                state: SessionState::Closed,
            });
        }
        let conn = ConnectionId::from_syn(seg);
        let isn = rng.next_u32();
        let mut flow = Flow::new(conn, false, cfg.window);

        let failed = |flow: Flow| Self {
            state: SessionState::Failed,
            flow,
            isn,
            dh: None,
            auth_digest: None,
        };

        match cfg.mode {
            Mode::Plain => {
                flow.peer_next_seq = Some(seg.seq.wrapping_add(1));
                flow.next_send_seq = isn.wrapping_add(1);
                let reply = flow.outbound(
                    Flags::SYN | Flags::ACK,
                    isn,
                    seg.seq.wrapping_add(1),
                    DATA_WINDOW,
                    Vec::new(),
                );
                Ok((
                    Self {
                        state: SessionState::SynRcvd,
                        flow,
                        isn,
                        dh: None,
                        auth_digest: None,
                    },
                    Some(reply),
                ))
            }
            Mode::Secured => {
                let private = cfg.server_private.as_ref().ok_or_else(|| {
                    ProtocolError::Config("secured server needs its private key".into())
                })?;

                let ciphertext = BigUint::from_bytes_be(&seg.payload);
                if &ciphertext >= private.n() {
                    return Ok((failed(flow), None));
                }
                let decoded = rsa_decrypt(private, &ciphertext)
                    .ok()
                    .and_then(|m| decode_handshake_payload(&m).ok());
                let Some((p, g, peer_public)) = decoded else {
                    return Ok((failed(flow), None));
                };
                let Ok(params) = DhParams::new(p, g) else {
                    return Ok((failed(flow), None));
                };
                let private_exp = match &cfg.fixed_dh {
                    Some(fixed) => fixed.server_private.clone(),
                    None => random_in_range(rng, &BigUint::one(), params.p()),
                };
                let (public, key) = match (
                    dh_public(&params, &private_exp),
                    dh_shared(&params, &peer_public, &private_exp),
                ) {
                    (Ok(public), Ok(key)) => (public, key),
                    _ => return Ok((failed(flow), None)),
                };
                let Ok(signature) = rsa_sign_recoverable(private, &public) else {
                    return Ok((failed(flow), None));
                };

                flow.peer_next_seq = Some(seg.seq); // handshake consumes nothing
                flow.next_send_seq = isn;
                let reply = flow.outbound(
                    Flags::SYN | Flags::ACK,
                    isn,
                    seg.seq,
                    DATA_WINDOW,
                    signature.to_bytes_be(),
                );
                Ok((
                    Self {
                        state: SessionState::SynRcvd,
                        flow,
                        isn,
                        dh: Some(ServerDh {
                            params,
                            public,
                            peer_public,
                            key,
                        }),
                        auth_digest: None,
                    },
                    Some(reply),
                ))
            }
        }
    }

    /// Final handshake step: verify the ack (and in secured mode the HMAC)
    /// and settle the connection.
    pub fn on_ack(
        &mut self,
        cfg: &SecureConfig,
        seg: &Segment,
    ) -> Result<EstablishOutcome, ProtocolError> {
        if self.state != SessionState::SynRcvd {
            return Err(ProtocolError::InvalidState {
                op: "on_ack",
                state: self.state,
            });
        }
        if !self.flow.inbound_matches(seg) || !seg.flags.contains(Flags::ACK) {
            return Ok(EstablishOutcome::Ignored);
        }

        match cfg.mode {
            Mode::Plain => {
                if seg.ack != self.isn.wrapping_add(1) {
                    return Ok(EstablishOutcome::Ignored);
                }
                self.state = SessionState::Established;
                Ok(EstablishOutcome::Established)
            }
            Mode::Secured => {
                if seg.ack != self.isn {
                    return Ok(EstablishOutcome::Ignored);
                }
                let dh = self.dh.as_ref().expect("secured server has DH material");
                let expected = hmac_sha1(&session_key_bytes(&dh.key), &cfg.auth_message);
                self.auth_digest = Some(expected);
                if seg.payload.as_slice() == expected.as_bytes() {
                    self.flow.session_key = Some(dh.key.clone());
                    self.state = SessionState::Established;
                    Ok(EstablishOutcome::Established)
                } else {
                    self.state = SessionState::Failed;
                    Ok(EstablishOutcome::Failed)
                }
            }
        }
    }

    pub fn send_data(
        &mut self,
        cfg: &SecureConfig,
        payload: &[u8],
    ) -> Result<Vec<Segment>, ProtocolError> {
        self.flow.send_data(&self.state, cfg, payload)
    }

    pub fn recv_data(&mut self, cfg: &SecureConfig, seg: &Segment) -> (Receipt, Option<Segment>) {
        self.flow.recv_data(&mut self.state, cfg, seg)
    }

    pub fn on_rst(&mut self, seg: &Segment) -> bool {
        self.flow.on_rst(&mut self.state, seg)
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn conn(&self) -> &ConnectionId {
        &self.flow.conn
    }

    pub fn isn(&self) -> u32 {
        self.isn
    }

    pub fn session_key(&self) -> Option<&BigUint> {
        self.flow.session_key.as_ref()
    }

    pub fn dh_params(&self) -> Option<&DhParams> {
        self.dh.as_ref().map(|d| &d.params)
    }

    /// YS.
    pub fn dh_public_value(&self) -> Option<&BigUint> {
        self.dh.as_ref().map(|d| &d.public)
    }

    /// YC as decrypted from the first handshake.
    pub fn peer_public_value(&self) -> Option<&BigUint> {
        self.dh.as_ref().map(|d| &d.peer_public)
    }

    /// The key the server derived at the second handshake (present even
    /// before establishment, unlike `session_key`).
    pub fn derived_key(&self) -> Option<&BigUint> {
        self.dh.as_ref().map(|d| &d.key)
    }

    /// HMAC' recomputed for the third-handshake verification.
    pub fn auth_digest(&self) -> Option<&Digest> {
        self.auth_digest.as_ref()
    }

    pub fn accepted_payloads(&self) -> &[Vec<u8>] {
        &self.flow.accepted
    }

    pub fn quarantined_payloads(&self) -> &[Vec<u8>] {
        &self.flow.quarantined
    }

    pub fn send_hmac_count(&self) -> u64 {
        self.flow.send_window.hmac_count()
    }

    pub fn recv_hmac_count(&self) -> u64 {
        self.flow.recv_window.hmac_count()
    }

    /// Ordinal of the receive window currently being accumulated.
    pub fn recv_window_ordinal(&self) -> u64 {
        self.flow.recv_window.ordinal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::rsa_keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::net::SocketAddrV4;

    fn conn() -> ConnectionId {
        ConnectionId::new(
            "192.168.0.104:59999".parse::<SocketAddrV4>().unwrap(),
            "192.168.0.105:49999".parse::<SocketAddrV4>().unwrap(),
        )
    }

    fn demo_keys() -> (RsaPublicKey, RsaPrivateKey) {
        static KEYS: std::sync::OnceLock<(RsaPublicKey, RsaPrivateKey)> =
            std::sync::OnceLock::new();
        KEYS.get_or_init(|| {
            let mut rng = ChaCha20Rng::seed_from_u64(0xC0FFEE);
            rsa_keygen(64, &BigUint::from(65537u32), &mut rng)
        })
        .clone()
    }

    fn secured_pair_cfg(window: u32) -> (SecureConfig, SecureConfig) {
        let (public, private) = demo_keys();
        let client = SecureConfig::secured_client(public.clone())
            .with_window(window)
            .with_fixed_dh(FixedDh::reference());
        let server = SecureConfig::secured_server(public, private)
            .with_window(window)
            .with_fixed_dh(FixedDh::reference());
        (client, server)
    }

    struct Handshake {
        client: ClientSession,
        server: ServerSession,
        syn: Segment,
        synack: Segment,
        ack: Segment,
    }

    fn run_handshake(client_cfg: &SecureConfig, server_cfg: &SecureConfig, seed: u64) -> Handshake {
        let mut crng = ChaCha20Rng::seed_from_u64(seed);
        let mut srng = ChaCha20Rng::seed_from_u64(seed ^ 0xdead_beef);
        let (mut client, syn) = ClientSession::start(client_cfg, conn(), &mut crng).unwrap();
        let (mut server, synack) = ServerSession::on_syn(server_cfg, &syn, &mut srng).unwrap();
        let synack = synack.expect("server replied");
        let ack = client
            .on_synack(client_cfg, &synack)
            .unwrap()
            .expect("client replied");
        assert_eq!(
            server.on_ack(server_cfg, &ack).unwrap(),
            EstablishOutcome::Established
        );
        Handshake {
            client,
            server,
            syn,
            synack,
            ack,
        }
    }

    #[test]
    fn plain_handshake_establishes_in_three_segments() {
        let cfg = SecureConfig::plain();
        let hs = run_handshake(&cfg, &cfg, 7);
        assert_eq!(hs.client.state(), SessionState::Established);
        assert_eq!(hs.server.state(), SessionState::Established);
        assert!(hs.syn.payload.is_empty());
        assert_eq!(hs.syn.flags, Flags::SYN);
        // RFC-style acknowledgment arithmetic.
        assert_eq!(hs.synack.ack, hs.syn.seq.wrapping_add(1));
        assert_eq!(hs.ack.ack, hs.synack.seq.wrapping_add(1));
    }

    #[test]
    fn plain_start_is_deterministic() {
        let cfg = SecureConfig::plain();
        let (_, a) =
            ClientSession::start(&cfg, conn(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let (_, b) =
            ClientSession::start(&cfg, conn(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn secured_handshake_reproduces_reference_values() {
        let (ccfg, scfg) = secured_pair_cfg(100);
        let hs = run_handshake(&ccfg, &scfg, 40);

        assert_eq!(hs.client.dh_public_value().unwrap(), &BigUint::from(50u32)); // YC
        assert_eq!(hs.server.dh_public_value().unwrap(), &BigUint::from(44u32)); // YS
        assert_eq!(
            hs.server.peer_public_value().unwrap(),
            &BigUint::from(50u32)
        );
        assert_eq!(
            hs.client.peer_public_value().unwrap(),
            &BigUint::from(44u32)
        );
        assert_eq!(hs.client.session_key().unwrap(), &BigUint::from(75u32));
        assert_eq!(hs.server.session_key().unwrap(), &BigUint::from(75u32));
        assert_eq!(
            hs.client.auth_digest().unwrap().to_hex(),
            "ada668f4688e906e157d8613dc4408ce00de1cf0"
        );
        assert_eq!(hs.client.auth_digest(), hs.server.auth_digest());

        // Scheme-literal acknowledgment numbers: ack=J then ack=I.
        assert_eq!(hs.synack.ack, hs.syn.seq);
        assert_eq!(hs.ack.ack, hs.synack.seq);
        assert_eq!(hs.ack.payload.len(), 20);
    }

    #[test]
    fn secured_syn_payload_decrypts_to_dh_offer() {
        let (ccfg, _) = secured_pair_cfg(100);
        let (_, private) = demo_keys();
        let (_, syn) =
            ClientSession::start(&ccfg, conn(), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let c = BigUint::from_bytes_be(&syn.payload);
        let m = rsa_decrypt(&private, &c).unwrap();
        let (p, g, yc) = decode_handshake_payload(&m).unwrap();
        assert_eq!(p, BigUint::from(97u32));
        assert_eq!(g, BigUint::from(5u32));
        assert_eq!(yc, BigUint::from(50u32));
    }

    #[test]
    fn secured_start_is_deterministic() {
        let (ccfg, _) = secured_pair_cfg(100);
        let (_, a) =
            ClientSession::start(&ccfg, conn(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        let (_, b) =
            ClientSession::start(&ccfg, conn(), &mut ChaCha20Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_dh_payload_is_a_config_error() {
        // n = 3233 cannot carry "97$5$50".
        let (public, _) = crate::crypto::rsa_keypair_from_primes(
            &BigUint::from(61u32),
            &BigUint::from(53u32),
            &BigUint::from(17u32),
        )
        .unwrap();
        let cfg = SecureConfig::secured_client(public).with_fixed_dh(FixedDh::reference());
        let err = ClientSession::start(&cfg, conn(), &mut ChaCha20Rng::seed_from_u64(1));
        assert!(matches!(err, Err(ProtocolError::Config(_))));
    }

    #[test]
    fn wrong_ack_discarded_without_state_change() {
        let (ccfg, scfg) = secured_pair_cfg(100);
        let mut crng = ChaCha20Rng::seed_from_u64(8);
        let mut srng = ChaCha20Rng::seed_from_u64(9);
        let (mut client, syn) = ClientSession::start(&ccfg, conn(), &mut crng).unwrap();
        let (_, synack) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
        let mut synack = synack.unwrap();
        synack.ack = synack.ack.wrapping_add(1);
        assert_eq!(client.on_synack(&ccfg, &synack).unwrap(), None);
        assert_eq!(client.state(), SessionState::SynSent);
    }

    #[test]
    fn server_ignores_wrong_ack_in_third_handshake() {
        let (ccfg, scfg) = secured_pair_cfg(100);
        let mut crng = ChaCha20Rng::seed_from_u64(10);
        let mut srng = ChaCha20Rng::seed_from_u64(11);
        let (mut client, syn) = ClientSession::start(&ccfg, conn(), &mut crng).unwrap();
        let (mut server, synack) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
        let mut ack = client.on_synack(&ccfg, &synack.unwrap()).unwrap().unwrap();
        ack.ack = ack.ack.wrapping_add(7);
        assert_eq!(
            server.on_ack(&scfg, &ack).unwrap(),
            EstablishOutcome::Ignored
        );
        assert_eq!(server.state(), SessionState::SynRcvd);
    }

    #[test]
    fn flipped_hmac_bit_fails_establishment() {
        let (ccfg, scfg) = secured_pair_cfg(100);
        let mut crng = ChaCha20Rng::seed_from_u64(12);
        let mut srng = ChaCha20Rng::seed_from_u64(13);
        let (mut client, syn) = ClientSession::start(&ccfg, conn(), &mut crng).unwrap();
        let (mut server, synack) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
        let mut ack = client.on_synack(&ccfg, &synack.unwrap()).unwrap().unwrap();
        ack.payload[5] ^= 0x40;
        assert_eq!(
            server.on_ack(&scfg, &ack).unwrap(),
            EstablishOutcome::Failed
        );
        assert_eq!(server.state(), SessionState::Failed);
    }

    #[test]
    fn random_ciphertext_rejected_empirically() {
        let (_, scfg) = secured_pair_cfg(100);
        let n = scfg.server_public.as_ref().unwrap().n().clone();
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        for trial in 0..1000 {
            let c = crate::crypto::random_below(&mut rng, &n);
            let syn = Segment {
                src_ip: "192.168.0.104".parse().unwrap(),
                dst_ip: "192.168.0.105".parse().unwrap(),
                src_port: 59999,
                dst_port: 49999,
                seq: 1,
                ack: 0,
                flags: Flags::SYN,
                window: DATA_WINDOW,
                ttl: DEFAULT_TTL,
                payload: c.to_bytes_be(),
            };
            let mut srng = ChaCha20Rng::seed_from_u64(trial);
            let (server, reply) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
            assert_eq!(server.state(), SessionState::Failed, "trial {trial}");
            assert!(reply.is_none());
        }
    }

    #[test]
    fn session_keys_agree_for_random_parameters() {
        // Random 16-bit DH parameters encode to ~17 payload bytes, so this
        // needs a wider modulus than the reference-exchange key.
        let mut krng = ChaCha20Rng::seed_from_u64(0xC0FFEE + 1);
        let (public, private) = rsa_keygen(256, &BigUint::from(65537u32), &mut krng);
        let mut rng = ChaCha20Rng::seed_from_u64(777);
        for trial in 0..200 {
            let base = SecureConfig::secured_client(public.clone());
            let p = generate_prime(16, &mut rng);
            let g = random_in_range(&mut rng, &BigUint::from(2u32), &p);
            let fixed = FixedDh {
                p: p.clone(),
                g,
                client_private: random_in_range(&mut rng, &BigUint::one(), &p),
                server_private: random_in_range(&mut rng, &BigUint::one(), &p),
            };
            let ccfg = base.with_fixed_dh(fixed.clone());
            let scfg =
                SecureConfig::secured_server(public.clone(), private.clone()).with_fixed_dh(fixed);
            let hs = run_handshake(&ccfg, &scfg, trial);
            assert_eq!(
                hs.client.session_key(),
                hs.server.session_key(),
                "trial {trial}"
            );
        }
    }

    #[test]
    fn w2_two_payloads_make_three_segments() {
        let (ccfg, scfg) = secured_pair_cfg(2);
        let mut hs = run_handshake(&ccfg, &scfg, 20);
        let first = hs.client.send_data(&ccfg, b"one").unwrap();
        assert_eq!(first.len(), 1);
        let second = hs.client.send_data(&ccfg, b"two").unwrap();
        assert_eq!(second.len(), 2);
        let checkpoint = &second[1];
        assert_eq!(checkpoint.window, CHECKPOINT_WINDOW);
        assert_eq!(checkpoint.payload.len(), 20);

        // Independent HMAC over the same transcript bytes.
        let mut transcript = conn().render().into_bytes();
        transcript.extend_from_slice(&0u64.to_be_bytes());
        transcript.extend_from_slice(b"onetwo");
        let expected = hmac_sha1(b"75", &transcript);
        assert_eq!(checkpoint.payload, expected.as_bytes());
    }

    #[test]
    fn w100_250_payloads_emit_two_checkpoints() {
        let (ccfg, scfg) = secured_pair_cfg(100);
        let mut hs = run_handshake(&ccfg, &scfg, 21);
        let mut checkpoints = 0;
        for i in 0..250 {
            let out = hs
                .client
                .send_data(&ccfg, format!("p{i}").as_bytes())
                .unwrap();
            checkpoints += out.iter().filter(|s| s.window == CHECKPOINT_WINDOW).count();
        }
        assert_eq!(checkpoints, 2);
        assert_eq!(hs.client.send_hmac_count(), 2);
    }

    #[test]
    fn honest_transfer_passes_all_checkpoints() {
        for window in [1u32, 2, 10, 100] {
            let (ccfg, scfg) = secured_pair_cfg(window);
            let mut hs = run_handshake(&ccfg, &scfg, 22);
            let mut ok = 0;
            let mut fail = 0;
            for i in 0..300 {
                for seg in hs
                    .client
                    .send_data(&ccfg, format!("data-{i}").as_bytes())
                    .unwrap()
                {
                    match hs.server.recv_data(&scfg, &seg).0 {
                        Receipt::CheckpointOk => ok += 1,
                        Receipt::CheckpointFail => fail += 1,
                        Receipt::Accepted(_) => {}
                        Receipt::Rejected(r) => panic!("rejected: {r}"),
                    }
                }
            }
            assert_eq!(fail, 0, "W={window}");
            assert_eq!(ok, 300 / window as usize, "W={window}");
            assert_eq!(hs.server.state(), SessionState::Established);
            assert_eq!(
                hs.server.accepted_payloads().len(),
                (300 / window * window) as usize
            );
        }
    }

    #[test]
    fn injection_at_every_offset_detected_for_w10() {
        for offset in 1..=10u32 {
            let (ccfg, scfg) = secured_pair_cfg(10);
            let mut hs = run_handshake(&ccfg, &scfg, 23);
            let mut outcome = Vec::new();
            let mut injected_seq = None;
            let mut honest: Vec<Segment> = Vec::new();
            for i in 0..10 {
                honest.extend(
                    hs.client
                        .send_data(&ccfg, format!("d{i}").as_bytes())
                        .unwrap(),
                );
            }
            let mut delivered_data = 0u32;
            for seg in honest {
                let is_data = seg.window != CHECKPOINT_WINDOW;
                let (receipt, _) = hs.server.recv_data(&scfg, &seg);
                outcome.push(receipt.clone());
                if is_data {
                    delivered_data += 1;
                    if delivered_data == offset && injected_seq.is_none() {
                        // Forge the exact next sequence number, as the
                        // attacker would.
                        let mut forged = seg.clone();
                        forged.seq = seg.seq.wrapping_add(seg.payload.len() as u32);
                        forged.payload = b"evil".to_vec();
                        injected_seq = Some(forged.seq);
                        let (receipt, _) = hs.server.recv_data(&scfg, &forged);
                        outcome.push(receipt);
                    }
                }
                if hs.server.state() == SessionState::Failed {
                    break;
                }
            }
            assert!(
                outcome.contains(&Receipt::CheckpointFail),
                "offset {offset}: {outcome:?}"
            );
            assert_eq!(hs.server.state(), SessionState::Failed, "offset {offset}");
            assert!(!hs.server.accepted_payloads().iter().any(|p| p == b"evil"));
        }
    }

    #[test]
    fn replayed_checkpoint_fails_across_windows() {
        let (ccfg, scfg) = secured_pair_cfg(2);
        let mut hs = run_handshake(&ccfg, &scfg, 24);
        // Window 0: aa, bb + checkpoint.
        let mut segs = Vec::new();
        segs.extend(hs.client.send_data(&ccfg, b"aa").unwrap());
        segs.extend(hs.client.send_data(&ccfg, b"bb").unwrap());
        let old_checkpoint = segs.last().unwrap().clone();
        for seg in &segs {
            assert_ne!(hs.server.recv_data(&scfg, seg).0, Receipt::CheckpointFail);
        }
        // Window 1 carries the same payloads, but replaying window 0's
        // checkpoint must not validate it.
        let w1 = [
            hs.client.send_data(&ccfg, b"aa").unwrap(),
            hs.client.send_data(&ccfg, b"bb").unwrap(),
        ];
        let (r1, _) = hs.server.recv_data(&scfg, &w1[0][0]);
        assert!(matches!(r1, Receipt::Accepted(_)));
        let (r2, _) = hs.server.recv_data(&scfg, &w1[1][0]);
        assert!(matches!(r2, Receipt::Accepted(_)));
        let (receipt, rst) = hs.server.recv_data(&scfg, &old_checkpoint);
        assert_eq!(receipt, Receipt::CheckpointFail);
        assert!(rst.is_some());
        assert_eq!(hs.server.state(), SessionState::Failed);
    }

    #[test]
    fn out_of_session_segments_rejected() {
        let cfg = SecureConfig::plain();
        let mut hs = run_handshake(&cfg, &cfg, 25);
        let data = hs.client.send_data(&cfg, b"hello").unwrap().remove(0);

        let mut wrong_port = data.clone();
        wrong_port.src_port = 1234;
        assert_eq!(
            hs.server.recv_data(&cfg, &wrong_port).0,
            Receipt::Rejected("out-of-session")
        );

        let mut wrong_seq = data.clone();
        wrong_seq.seq = wrong_seq.seq.wrapping_add(999);
        assert_eq!(
            hs.server.recv_data(&cfg, &wrong_seq).0,
            Receipt::Rejected("out-of-session")
        );

        assert!(matches!(
            hs.server.recv_data(&cfg, &data).0,
            Receipt::Accepted(_)
        ));
    }

    #[test]
    fn rst_resets_matching_session_only() {
        let cfg = SecureConfig::plain();
        let mut hs = run_handshake(&cfg, &cfg, 26);

        // Server-impersonating RST with the right next sequence number.
        let rst = Segment {
            src_ip: *conn().server.ip(),
            dst_ip: *conn().client.ip(),
            src_port: conn().server.port(),
            dst_port: conn().client.port(),
            seq: hs.synack.seq.wrapping_add(1),
            ack: 0,
            flags: Flags::RST,
            window: 0,
            ttl: DEFAULT_TTL,
            payload: Vec::new(),
        };
        let mut wrong_port = rst.clone();
        wrong_port.src_port = 4242;
        assert!(!hs.client.on_rst(&wrong_port));
        assert_eq!(hs.client.state(), SessionState::Established);

        let mut wrong_seq = rst.clone();
        wrong_seq.seq = wrong_seq.seq.wrapping_add(5);
        assert!(!hs.client.on_rst(&wrong_seq));

        assert!(hs.client.on_rst(&rst));
        assert_eq!(hs.client.state(), SessionState::Reset);
        assert!(hs.client.send_data(&cfg, b"more").is_err());
    }

    #[test]
    fn single_bit_mutations_never_establish_mismatched_keys() {
        let (ccfg, scfg) = secured_pair_cfg(100);
        let mut positions = ChaCha20Rng::seed_from_u64(0xBAD);

        // Mutate the SYN payload: the server is the receiving side.
        for trial in 0..100 {
            let mut crng = ChaCha20Rng::seed_from_u64(trial);
            let mut srng = ChaCha20Rng::seed_from_u64(trial ^ 1);
            let (client, mut syn) = ClientSession::start(&ccfg, conn(), &mut crng).unwrap();
            let bit = (positions.next_u64() as usize) % (syn.payload.len() * 8);
            syn.payload[bit / 8] ^= 1 << (bit % 8);
            let (server, reply) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
            assert_eq!(server.state(), SessionState::Failed, "syn trial {trial}");
            assert!(reply.is_none());
            assert_ne!(client.state(), SessionState::Established);
        }

        // Mutate the SYN|ACK payload: the client is the receiving side.
        for trial in 0..100 {
            let mut crng = ChaCha20Rng::seed_from_u64(trial);
            let mut srng = ChaCha20Rng::seed_from_u64(trial ^ 1);
            let (mut client, syn) = ClientSession::start(&ccfg, conn(), &mut crng).unwrap();
            let (server, synack) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
            let mut synack = synack.unwrap();
            let bit = (positions.next_u64() as usize) % (synack.payload.len() * 8);
            synack.payload[bit / 8] ^= 1 << (bit % 8);
            let reply = client.on_synack(&ccfg, &synack).unwrap();
            assert_eq!(client.state(), SessionState::Failed, "synack trial {trial}");
            assert!(reply.is_none());
            assert_ne!(server.state(), SessionState::Established);
        }

        // Mutate the third-handshake HMAC: the server is the receiving side.
        for trial in 0..100 {
            let mut crng = ChaCha20Rng::seed_from_u64(trial);
            let mut srng = ChaCha20Rng::seed_from_u64(trial ^ 1);
            let (mut client, syn) = ClientSession::start(&ccfg, conn(), &mut crng).unwrap();
            let (mut server, synack) = ServerSession::on_syn(&scfg, &syn, &mut srng).unwrap();
            let mut ack = client.on_synack(&ccfg, &synack.unwrap()).unwrap().unwrap();
            let bit = (positions.next_u64() as usize) % (ack.payload.len() * 8);
            ack.payload[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(
                server.on_ack(&scfg, &ack).unwrap(),
                EstablishOutcome::Failed
            );
            assert_eq!(server.state(), SessionState::Failed, "hmac trial {trial}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Honest transfers never trip a checkpoint, whatever the
            /// payload sequence; only complete windows commit.
            #[test]
            fn honest_transfers_never_fail_checkpoints(
                window in 1u32..=16,
                payloads in proptest::collection::vec(
                    proptest::collection::vec(any::<u8>(), 0..32),
                    0..40,
                ),
            ) {
                let (ccfg, scfg) = secured_pair_cfg(window);
                let mut hs = run_handshake(&ccfg, &scfg, 4242);
                for payload in &payloads {
                    for seg in hs.client.send_data(&ccfg, payload).unwrap() {
                        let (receipt, rst) = hs.server.recv_data(&scfg, &seg);
                        prop_assert!(receipt != Receipt::CheckpointFail, "{receipt:?}");
                        prop_assert!(rst.is_none());
                    }
                }
                prop_assert_eq!(hs.server.state(), SessionState::Established);
                let committed = payloads.len() / window as usize * window as usize;
                prop_assert_eq!(hs.server.accepted_payloads().len(), committed);
            }
        }
    }
}
