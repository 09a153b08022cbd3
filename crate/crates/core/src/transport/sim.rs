//! Deterministic in-process network: one client, one server endpoint, a
//! virtual clock and an [`Interceptor`] sitting on the link.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::io;
use std::net::SocketAddr;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{MessageType, SessionResult, TerminateReason, Timestamp};

use super::{Channel, ServerEndpoint, ServerEvent, handshake_type};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

/// Decides what the link does with each datagram. `ordinal` counts datagrams
/// per direction from zero. Each returned pair is delivered once after the
/// given extra delay; an empty vector drops the datagram.
pub trait Interceptor {
    fn on_datagram(&mut self, dir: Direction, ordinal: usize, bytes: &[u8], now: Duration) -> Vec<(Duration, Vec<u8>)>;
}

/// Delivers everything unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl Interceptor for PassThrough {
    fn on_datagram(&mut self, _: Direction, _: usize, bytes: &[u8], _: Duration) -> Vec<(Duration, Vec<u8>)> {
        vec![(Duration::ZERO, bytes.to_vec())]
    }
}

impl<I: Interceptor + ?Sized> Interceptor for Box<I> {
    fn on_datagram(&mut self, dir: Direction, ordinal: usize, bytes: &[u8], now: Duration) -> Vec<(Duration, Vec<u8>)> {
        (**self).on_datagram(dir, ordinal, bytes, now)
    }
}

/// Static per-datagram drop, duplicate and delay rules.
#[derive(Clone, Debug, Default)]
pub struct LinkSchedule {
    drop: HashSet<(Direction, usize)>,
    duplicate: HashSet<(Direction, usize)>,
    delay: BTreeMap<(Direction, usize), Duration>,
}

impl LinkSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn drop(mut self, dir: Direction, ordinal: usize) -> Self {
        self.drop.insert((dir, ordinal));
        self
    }

    pub fn duplicate(mut self, dir: Direction, ordinal: usize) -> Self {
        self.duplicate.insert((dir, ordinal));
        self
    }

    pub fn delay(mut self, dir: Direction, ordinal: usize, by: Duration) -> Self {
        self.delay.insert((dir, ordinal), by);
        self
    }
}

impl Interceptor for LinkSchedule {
    fn on_datagram(&mut self, dir: Direction, ordinal: usize, bytes: &[u8], _: Duration) -> Vec<(Duration, Vec<u8>)> {
        let key = (dir, ordinal);
        if self.drop.contains(&key) {
            return Vec::new();
        }
        let delay = self.delay.get(&key).copied().unwrap_or_default();
        let copies = if self.duplicate.contains(&key) { 2 } else { 1 };
        vec![(delay, bytes.to_vec()); copies]
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub client_addr: SocketAddr,
    pub server_addr: SocketAddr,
    /// One-way latency added to every delivery.
    pub latency: Duration,
    /// Protocol time at virtual time zero.
    pub epoch: Timestamp,
    pub server_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            client_addr: "192.0.2.10:40000".parse().unwrap(),
            server_addr: "198.51.100.1:5683".parse().unwrap(),
            latency: Duration::from_millis(10),
            epoch: Timestamp(1_700_000_000),
            server_seed: 0,
        }
    }
}

/// Summary of a server event for transcripts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "event", content = "detail")]
pub enum EventSummary {
    Replied { retransmission: bool },
    Established { client: u64 },
    Terminated(TerminateReason),
    Dropped,
    Ignored,
}

impl From<&ServerEvent> for EventSummary {
    fn from(e: &ServerEvent) -> Self {
        match e {
            ServerEvent::Replied { retransmission, .. } => EventSummary::Replied {
                retransmission: *retransmission,
            },
            ServerEvent::Established(r) => EventSummary::Established { client: r.peer.0 },
            ServerEvent::Terminated(r) => EventSummary::Terminated(*r),
            ServerEvent::Dropped => EventSummary::Dropped,
            ServerEvent::Ignored => EventSummary::Ignored,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "what")]
pub enum LinkRecord {
    /// A datagram entered the link and the interceptor produced `copies`.
    Sent {
        at_ms: u64,
        direction: Direction,
        ordinal: usize,
        kind: Option<MessageType>,
        len: usize,
        copies: usize,
    },
    /// A datagram placed on the link directly, bypassing the interceptor.
    Injected {
        at_ms: u64,
        direction: Direction,
        source: String,
        kind: Option<MessageType>,
        len: usize,
    },
    Delivered {
        at_ms: u64,
        direction: Direction,
        source: String,
        kind: Option<MessageType>,
        len: usize,
        server: Option<EventSummary>,
    },
}

struct InFlight {
    direction: Direction,
    source: SocketAddr,
    /// Replies to sources other than the client leave the simulated world.
    to_client: bool,
    bytes: Vec<u8>,
}

pub struct SimNet<I: Interceptor = PassThrough> {
    cfg: SimConfig,
    endpoint: ServerEndpoint,
    interceptor: I,
    now: Duration,
    seq: u64,
    queue: BTreeMap<(Duration, u64), InFlight>,
    inbox: VecDeque<Vec<u8>>,
    ordinals: [usize; 2],
    transcript: Vec<LinkRecord>,
    events: Vec<(Duration, SocketAddr, ServerEvent)>,
    server_rng: ChaCha20Rng,
}

fn idx(dir: Direction) -> usize {
    match dir {
        Direction::ClientToServer => 0,
        Direction::ServerToClient => 1,
    }
}

impl<I: Interceptor> SimNet<I> {
    pub fn new(cfg: SimConfig, endpoint: ServerEndpoint, interceptor: I) -> Self {
        let server_rng = ChaCha20Rng::seed_from_u64(cfg.server_seed);
        SimNet {
            cfg,
            endpoint,
            interceptor,
            now: Duration::ZERO,
            seq: 0,
            queue: BTreeMap::new(),
            inbox: VecDeque::new(),
            ordinals: [0; 2],
            transcript: Vec::new(),
            events: Vec::new(),
            server_rng,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn endpoint(&self) -> &ServerEndpoint {
        &self.endpoint
    }

    pub fn interceptor(&self) -> &I {
        &self.interceptor
    }

    pub fn interceptor_mut(&mut self) -> &mut I {
        &mut self.interceptor
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    pub fn transcript(&self) -> &[LinkRecord] {
        &self.transcript
    }

    pub fn server_events(&self) -> &[(Duration, SocketAddr, ServerEvent)] {
        &self.events
    }

    pub fn established(&self) -> Vec<&SessionResult> {
        self.events
            .iter()
            .filter_map(|(_, _, e)| match e {
                ServerEvent::Established(r) => Some(r),
                _ => None,
            })
            .collect()
    }

    /// Datagrams carrying a handshake message that reached their endpoint.
    pub fn delivered_handshake_messages(&self) -> usize {
        self.transcript
            .iter()
            .filter(|r| matches!(r, LinkRecord::Delivered { kind: Some(_), .. }))
            .count()
    }

    fn clock_at(&self, t: Duration) -> Timestamp {
        self.cfg.epoch.saturating_add(Duration::from_secs(t.as_secs()))
    }

    fn schedule(&mut self, at: Duration, flight: InFlight) {
        self.seq += 1;
        self.queue.insert((at, self.seq), flight);
    }

    fn transmit(&mut self, dir: Direction, source: SocketAddr, to_client: bool, bytes: &[u8]) {
        let ordinal = self.ordinals[idx(dir)];
        self.ordinals[idx(dir)] += 1;
        let copies = self.interceptor.on_datagram(dir, ordinal, bytes, self.now);
        self.transcript.push(LinkRecord::Sent {
            at_ms: self.now.as_millis() as u64,
            direction: dir,
            ordinal,
            kind: handshake_type(bytes),
            len: bytes.len(),
            copies: copies.len(),
        });
        for (delay, data) in copies {
            let at = self.now + self.cfg.latency + delay;
            self.schedule(
                at,
                InFlight {
                    direction: dir,
                    source,
                    to_client,
                    bytes: data,
                },
            );
        }
    }

    /// Places `bytes` on the link at virtual time `at` (clamped to now),
    /// bypassing the interceptor. Server-bound datagrams appear to come from
    /// `source`; client-bound ones are always delivered to the client.
    pub fn inject(&mut self, at: Duration, dir: Direction, source: SocketAddr, bytes: Vec<u8>) {
        let at = at.max(self.now);
        self.transcript.push(LinkRecord::Injected {
            at_ms: at.as_millis() as u64,
            direction: dir,
            source: source.to_string(),
            kind: handshake_type(&bytes),
            len: bytes.len(),
        });
        self.schedule(
            at,
            InFlight {
                direction: dir,
                source,
                to_client: true,
                bytes,
            },
        );
    }

    fn process_next(&mut self) {
        let Some(((at, _), flight)) = self.queue.pop_first() else {
            return;
        };
        self.now = self.now.max(at);
        let kind = handshake_type(&flight.bytes);
        match flight.direction {
            Direction::ClientToServer => {
                let clock = self.clock_at(self.now);
                let handled = self
                    .endpoint
                    .handle_datagram(&flight.bytes, flight.source, clock, &mut self.server_rng);
                self.transcript.push(LinkRecord::Delivered {
                    at_ms: self.now.as_millis() as u64,
                    direction: flight.direction,
                    source: flight.source.to_string(),
                    kind,
                    len: flight.bytes.len(),
                    server: Some(EventSummary::from(&handled.event)),
                });
                self.events.push((self.now, flight.source, handled.event));
                if let Some(reply) = handled.reply {
                    let to_client = flight.source == self.cfg.client_addr;
                    let server = self.cfg.server_addr;
                    self.transmit(Direction::ServerToClient, server, to_client, &reply);
                }
            }
            Direction::ServerToClient => {
                if !flight.to_client {
                    return;
                }
                self.transcript.push(LinkRecord::Delivered {
                    at_ms: self.now.as_millis() as u64,
                    direction: flight.direction,
                    source: flight.source.to_string(),
                    kind,
                    len: flight.bytes.len(),
                    server: None,
                });
                self.inbox.push_back(flight.bytes);
            }
        }
    }

    /// Runs the network for `by` of virtual time.
    pub fn advance(&mut self, by: Duration) {
        let until = self.now + by;
        while self.queue.first_key_value().is_some_and(|((at, _), _)| *at <= until) {
            self.process_next();
        }
        self.now = until;
    }

    /// Processes every queued datagram.
    pub fn run_until_idle(&mut self) {
        while !self.queue.is_empty() {
            self.process_next();
        }
    }

    /// Drains datagrams that reached the client but were never read.
    pub fn take_client_inbox(&mut self) -> Vec<Vec<u8>> {
        self.inbox.drain(..).collect()
    }
}

impl<I: Interceptor> Channel for SimNet<I> {
    fn clock(&self) -> Timestamp {
        self.clock_at(self.now)
    }

    fn elapsed(&self) -> Duration {
        self.now
    }

    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        let source = self.cfg.client_addr;
        self.transmit(Direction::ClientToServer, source, true, datagram);
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        let deadline = self.now + timeout;
        loop {
            if let Some(d) = self.inbox.pop_front() {
                return Ok(Some(d));
            }
            match self.queue.first_key_value() {
                Some(((at, _), _)) if *at <= deadline => self.process_next(),
                _ => {
                    self.now = deadline;
                    return Ok(None);
                }
            }
        }
    }
}
