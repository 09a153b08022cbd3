//! CoAP binding of the handshake.
//!
//! The first message travels as a confirmable POST and is retransmitted with
//! exponential backoff; the second comes back piggybacked on the ACK with the
//! same message id and token; the third is non-confirmable and never
//! acknowledged. A server that terminates a handshake answers the CON with
//! RST; a rate-limited source gets nothing.

pub mod coap;
pub mod sim;
pub mod udp;

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::curve::CurveProfile;
use crate::protocol::{
    ClientId, ClientSession, HandshakeConfig, HandshakeError, HandshakeMessage, MessageType, Rejection,
    ServerSessionTable, SessionResult, TerminateReason, Timestamp,
};

use coap::{CODE_POST, CoapMessage, CoapType};

pub const DEFAULT_PORT: u16 = 5683;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetransmitPolicy {
    pub initial_timeout: Duration,
    pub backoff_factor: f64,
    pub max_retransmits: u32,
}

impl Default for RetransmitPolicy {
    fn default() -> Self {
        RetransmitPolicy {
            initial_timeout: Duration::from_secs(2),
            backoff_factor: 2.0,
            max_retransmits: 4,
        }
    }
}

impl RetransmitPolicy {
    /// How long to wait after send number `attempt` (0 = first send).
    pub fn timeout(&self, attempt: u32) -> Duration {
        self.initial_timeout.mul_f64(self.backoff_factor.powi(attempt as i32))
    }

    pub fn is_valid(&self) -> bool {
        !self.initial_timeout.is_zero() && self.backoff_factor > 1.0
    }
}

/// A datagram link to one peer plus the clocks the handshake needs.
pub trait Channel {
    /// Protocol time used for timestamps.
    fn clock(&self) -> Timestamp;
    /// Monotonic time since the channel was created.
    fn elapsed(&self) -> Duration;
    fn send(&mut self, datagram: &[u8]) -> io::Result<()>;
    /// Waits up to `timeout` for one datagram.
    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;
}

#[derive(Debug, Error)]
pub enum ClientFailure {
    #[error("handshake terminated by client: {0}")]
    Terminated(TerminateReason),
    #[error("server reset the handshake")]
    Reset,
    #[error("no reply after {attempts} transmissions")]
    Timeout { attempts: u32 },
    #[error(transparent)]
    State(HandshakeError),
    #[error("transport error: {0}")]
    Io(#[from] io::Error),
}

/// Outcome of a completed client handshake with transport statistics.
#[derive(Debug)]
pub struct ClientReport {
    pub result: SessionResult,
    pub retransmissions: u32,
    pub datagrams_sent: u32,
    pub datagrams_received: u32,
    /// Distinct handshake messages exchanged (retransmissions excluded).
    pub handshake_messages: u32,
    /// Bytes of the distinct handshake messages, CoAP framing included.
    pub wire_bytes: usize,
    pub elapsed: Duration,
}

/// Runs steps 1 and 3 of `session` over `channel`.
pub fn run_client_handshake<C, R>(
    channel: &mut C,
    session: &mut ClientSession,
    cfg: &HandshakeConfig,
    policy: &RetransmitPolicy,
    rng: &mut R,
) -> Result<ClientReport, ClientFailure>
where
    C: Channel + ?Sized,
    R: RngCore + CryptoRng + ?Sized,
{
    let start = channel.elapsed();
    let msg1 = session.step1(rng, channel.clock()).map_err(ClientFailure::State)?;
    let message_id = rng.next_u32() as u16;
    let token = rng.next_u32().to_be_bytes();
    let con = CoapMessage::new(CoapType::Con, CODE_POST, message_id, &token, msg1.encode()).encode();

    let mut sent = 0;
    let mut received = 0;
    for attempt in 0..=policy.max_retransmits {
        channel.send(&con)?;
        sent += 1;
        let deadline = channel.elapsed() + policy.timeout(attempt);
        loop {
            let now = channel.elapsed();
            if now >= deadline {
                break;
            }
            let Some(datagram) = channel.recv(deadline - now)? else {
                break;
            };
            received += 1;
            let Ok(reply) = CoapMessage::decode(&datagram) else {
                continue;
            };
            if reply.header.message_id != message_id {
                continue;
            }
            match reply.header.msg_type {
                CoapType::Rst => return Err(ClientFailure::Reset),
                CoapType::Ack if reply.token == token => {}
                _ => continue,
            }
            let msg2 = match HandshakeMessage::decode(&reply.payload, session.curve()) {
                Ok(HandshakeMessage::Msg2(m)) => m,
                _ => return Err(ClientFailure::Terminated(TerminateReason::Malformed)),
            };
            let (msg3, result) = session
                .step3(&msg2, channel.clock(), cfg, rng)
                .map_err(|e| match e {
                    HandshakeError::Terminated(reason) => ClientFailure::Terminated(reason),
                    other => ClientFailure::State(other),
                })?;
            let non = CoapMessage::new(CoapType::Non, CODE_POST, message_id.wrapping_add(1), &token, msg3.encode())
                .encode();
            channel.send(&non)?;
            sent += 1;
            return Ok(ClientReport {
                result,
                retransmissions: attempt,
                datagrams_sent: sent,
                datagrams_received: received,
                handshake_messages: 3,
                wire_bytes: con.len() + datagram.len() + non.len(),
                elapsed: channel.elapsed() - start,
            });
        }
    }
    Err(ClientFailure::Timeout { attempts: sent })
}

/// What the server did with one datagram.
#[derive(Clone, Debug)]
pub enum ServerEvent {
    /// Sent the second message (fresh or cached).
    Replied { client: ClientId, retransmission: bool },
    Established(SessionResult),
    Terminated(TerminateReason),
    /// Source is rate-limited.
    Dropped,
    /// Not a request (stray ACK/RST); no state touched.
    Ignored,
}

#[derive(Clone, Debug)]
pub struct Handled {
    pub reply: Option<Vec<u8>>,
    pub event: ServerEvent,
}

/// Server side of the CoAP binding, shared by the UDP workers and the
/// simulator.
pub struct ServerEndpoint {
    table: Arc<ServerSessionTable>,
    curve: Arc<CurveProfile>,
    cfg: HandshakeConfig,
}

impl ServerEndpoint {
    pub fn new(table: Arc<ServerSessionTable>, curve: Arc<CurveProfile>, cfg: HandshakeConfig) -> Self {
        ServerEndpoint { table, curve, cfg }
    }

    pub fn table(&self) -> &Arc<ServerSessionTable> {
        &self.table
    }

    pub fn curve(&self) -> &Arc<CurveProfile> {
        &self.curve
    }

    pub fn config(&self) -> &HandshakeConfig {
        &self.cfg
    }

    pub fn handle_datagram<R: RngCore + CryptoRng + ?Sized>(
        &self,
        bytes: &[u8],
        source: SocketAddr,
        now: Timestamp,
        rng: &mut R,
    ) -> Handled {
        let silent = |event| Handled { reply: None, event };
        if !self.table.admit(source, now, &self.cfg) {
            return silent(ServerEvent::Dropped);
        }
        self.table.purge_expired(now, &self.cfg);

        let Ok(request) = CoapMessage::decode(bytes) else {
            self.table.record_failure(source, now, &self.cfg);
            return silent(ServerEvent::Terminated(TerminateReason::Malformed));
        };
        let kind = request.header.msg_type;
        if matches!(kind, CoapType::Ack | CoapType::Rst) {
            return silent(ServerEvent::Ignored);
        }
        let reset = |reason| Handled {
            reply: (kind == CoapType::Con).then(|| request.reset().encode()),
            event: ServerEvent::Terminated(reason),
        };

        match (kind, HandshakeMessage::decode(&request.payload, &self.curve)) {
            (CoapType::Con, Ok(HandshakeMessage::Msg1(msg1))) => {
                match self.table.server_step2(&msg1, source, now, &self.cfg, &self.curve, rng) {
                    Ok(reply) => Handled {
                        reply: Some(request.ack(reply.msg.encode()).encode()),
                        event: ServerEvent::Replied {
                            client: msg1.client_id,
                            retransmission: reply.retransmission,
                        },
                    },
                    Err(Rejection::SilentDrop) => silent(ServerEvent::Dropped),
                    Err(Rejection::Terminate(reason)) => reset(reason),
                }
            }
            (CoapType::Non, Ok(HandshakeMessage::Msg3(msg3))) => {
                match self.table.server_step4(&msg3, source, now, &self.cfg, &self.curve) {
                    Ok(result) => silent(ServerEvent::Established(result)),
                    Err(reason) => reset(reason),
                }
            }
            _ => {
                self.table.record_failure(source, now, &self.cfg);
                reset(TerminateReason::Malformed)
            }
        }
    }
}

/// Type of the handshake message inside a CoAP datagram, if any.
pub fn handshake_type(datagram: &[u8]) -> Option<MessageType> {
    let msg = CoapMessage::decode(datagram).ok()?;
    MessageType::from_byte(*msg.payload.get(1)?)
}
