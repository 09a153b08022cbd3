use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::sync::Mutex;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{CryptoRng, RngCore};

use crate::crypto::{self, LongTermKey};
use crate::curve::{CurveProfile, EcPoint, Scalar, ValidatedPoint};

use super::message::{Msg1Payload, Msg2Payload, Msg3Payload};
use super::{
    ClientId, HandshakeConfig, HandshakeMsg1, HandshakeMsg2, HandshakeMsg3, Keystore, SessionResult,
    TerminateReason, Timestamp, derive_result,
};

/// How the server declines a datagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    /// The source is rate-limited; nothing is sent back and no work is done.
    SilentDrop,
    Terminate(TerminateReason),
}

#[derive(Clone, Debug)]
pub struct Step2Reply {
    pub msg: HandshakeMsg2,
    /// True when `msg` is the cached reply to a duplicate of an earlier
    /// first message.
    pub retransmission: bool,
}

/// Source address truncated to the configured prefix length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AddressPrefix(IpAddr);

impl AddressPrefix {
    pub fn of(addr: IpAddr, cfg: &HandshakeConfig) -> Self {
        match addr {
            IpAddr::V4(v4) => {
                let bits = u32::from(v4);
                let mask = u32::MAX.checked_shl(32 - u32::from(cfg.ipv4_prefix_len.min(32))).unwrap_or(0);
                AddressPrefix(IpAddr::V4(Ipv4Addr::from(bits & mask)))
            }
            IpAddr::V6(v6) => {
                let bits = u128::from(v6);
                let mask = u128::MAX.checked_shl(128 - u32::from(cfg.ipv6_prefix_len.min(128))).unwrap_or(0);
                AddressPrefix(IpAddr::V6(Ipv6Addr::from(bits & mask)))
            }
        }
    }

    pub fn addr(&self) -> IpAddr {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct LimiterEntry {
    failures: u32,
    window_start: Timestamp,
    blocked_until: Option<Timestamp>,
}

/// Failure counter per source prefix. Reaching the threshold inside one
/// window blocks the prefix; once the block lapses the counter starts over.
#[derive(Debug, Default)]
pub struct RateLimiter {
    entries: HashMap<AddressPrefix, LimiterEntry>,
}

impl RateLimiter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_blocked(&mut self, prefix: AddressPrefix, now: Timestamp) -> bool {
        match self.entries.get(&prefix).and_then(|e| e.blocked_until) {
            Some(until) if now < until => true,
            Some(_) => {
                self.entries.remove(&prefix);
                false
            }
            None => false,
        }
    }

    /// Returns the failure count inside the current window.
    pub fn record_failure(&mut self, prefix: AddressPrefix, now: Timestamp, cfg: &HandshakeConfig) -> u32 {
        if self.is_blocked(prefix, now) {
            return self.entries[&prefix].failures;
        }
        let entry = self.entries.entry(prefix).or_insert(LimiterEntry {
            failures: 0,
            window_start: now,
            blocked_until: None,
        });
        if u64::from(now.0.saturating_sub(entry.window_start.0)) >= cfg.rate_window.as_secs() {
            entry.failures = 0;
            entry.window_start = now;
        }
        entry.failures += 1;
        if entry.failures >= cfg.failure_threshold {
            entry.blocked_until = Some(now.saturating_add(cfg.block_duration));
        }
        entry.failures
    }

    pub fn failures(&self, prefix: AddressPrefix) -> u32 {
        self.entries.get(&prefix).map_or(0, |e| e.failures)
    }

    /// Drops entries that are neither blocked nor inside a live window.
    pub fn prune(&mut self, now: Timestamp, cfg: &HandshakeConfig) {
        self.entries.retain(|_, e| match e.blocked_until {
            Some(until) => now < until,
            None => u64::from(now.0.saturating_sub(e.window_start.0)) < cfg.rate_window.as_secs(),
        });
    }
}

#[derive(Clone)]
struct PendingHandshake {
    id: u64,
    key: LongTermKey,
    r_s: Scalar,
    server_rand: EcPoint,
    client_rand: ValidatedPoint,
    rotation: bool,
    t2: Timestamp,
    msg1_wire: Vec<u8>,
    reply: HandshakeMsg2,
}

#[derive(Default)]
struct Table {
    pending: HashMap<(ClientId, SocketAddr), PendingHandshake>,
    keystore: Keystore,
}

/// Server state shared by all handshakes: the long-term keys, handshakes
/// waiting for their third message, and the per-prefix rate limiter.
pub struct ServerSessionTable {
    table: Mutex<Table>,
    limiter: Mutex<RateLimiter>,
    next_id: AtomicU64,
}

impl ServerSessionTable {
    pub fn new(keystore: Keystore) -> Self {
        ServerSessionTable {
            table: Mutex::new(Table {
                pending: HashMap::new(),
                keystore,
            }),
            limiter: Mutex::new(RateLimiter::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn table(&self) -> std::sync::MutexGuard<'_, Table> {
        self.table.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn limiter(&self) -> std::sync::MutexGuard<'_, RateLimiter> {
        self.limiter.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// False when datagrams from `source` are currently being dropped.
    pub fn admit(&self, source: SocketAddr, clock: Timestamp, cfg: &HandshakeConfig) -> bool {
        !self.limiter().is_blocked(AddressPrefix::of(source.ip(), cfg), clock)
    }

    pub fn record_failure(&self, source: SocketAddr, clock: Timestamp, cfg: &HandshakeConfig) -> u32 {
        self.limiter().record_failure(AddressPrefix::of(source.ip(), cfg), clock, cfg)
    }

    pub fn failure_count(&self, source: SocketAddr, cfg: &HandshakeConfig) -> u32 {
        self.limiter().failures(AddressPrefix::of(source.ip(), cfg))
    }

    pub fn keystore(&self) -> Keystore {
        self.table().keystore.clone()
    }

    pub fn long_term_key(&self, id: ClientId) -> Option<LongTermKey> {
        self.table().keystore.get(id).cloned()
    }

    pub fn pending_count(&self) -> usize {
        self.table().pending.len()
    }

    /// Forgets handshakes whose second message is older than ΔT.
    pub fn purge_expired(&self, clock: Timestamp, cfg: &HandshakeConfig) -> usize {
        let mut table = self.table();
        let before = table.pending.len();
        table.pending.retain(|_, p| p.t2.is_fresh(clock, cfg.delta_t));
        let purged = before - table.pending.len();
        drop(table);
        self.limiter().prune(clock, cfg);
        purged
    }

    /// Processes a first message and produces the second.
    pub fn server_step2<R: RngCore + CryptoRng + ?Sized>(
        &self,
        msg: &HandshakeMsg1,
        source: SocketAddr,
        clock: Timestamp,
        cfg: &HandshakeConfig,
        curve: &CurveProfile,
        rng: &mut R,
    ) -> Result<Step2Reply, Rejection> {
        if !self.admit(source, clock, cfg) {
            return Err(Rejection::SilentDrop);
        }
        let wire = msg.encode();
        let key = {
            let table = self.table();
            if let Some(p) = table.pending.get(&(msg.client_id, source))
                && p.msg1_wire == wire
                && p.t2.is_fresh(clock, cfg.delta_t)
            {
                return Ok(Step2Reply {
                    msg: p.reply.clone(),
                    retransmission: true,
                });
            }
            table.keystore.get(msg.client_id).cloned()
        };

        let outcome = key
            .ok_or(TerminateReason::UnknownClient)
            .and_then(|key| self.build_reply(msg, key, wire, clock, cfg, curve, rng));
        match outcome {
            Ok(pending) => {
                let reply = pending.reply.clone();
                self.table().pending.insert((msg.client_id, source), pending);
                Ok(Step2Reply {
                    msg: reply,
                    retransmission: false,
                })
            }
            Err(reason) => {
                self.record_failure(source, clock, cfg);
                Err(Rejection::Terminate(reason))
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_reply<R: RngCore + CryptoRng + ?Sized>(
        &self,
        msg: &HandshakeMsg1,
        key: LongTermKey,
        wire: Vec<u8>,
        clock: Timestamp,
        cfg: &HandshakeConfig,
        curve: &CurveProfile,
        rng: &mut R,
    ) -> Result<PendingHandshake, TerminateReason> {
        let plaintext = crypto::aead_open(&key, &msg.envelope).map_err(|_| TerminateReason::AuthFailure)?;
        let payload = Msg1Payload::decode(&plaintext, curve).ok_or(TerminateReason::Malformed)?;
        if payload.digest != crypto::hash_client_id(msg.client_id.0) {
            return Err(TerminateReason::DigestMismatch);
        }
        if !payload.t1.is_fresh(clock, cfg.delta_t) {
            return Err(TerminateReason::Stale);
        }
        let client_rand = curve
            .validate_point(&payload.client_rand)
            .map_err(TerminateReason::InvalidPoint)?;

        let rotation = (cfg.rotation_policy)(msg.client_id);
        let offset = if rotation { curve.double_generator() } else { curve.generator() };
        let response = curve
            .point_add(client_rand.point(), offset)
            .expect("validated point plus generator");
        let r_s = Scalar::random(rng, curve);
        let server_rand = curve
            .scalar_mult(&r_s, curve.generator())
            .expect("generator is on the curve");
        let reply_payload = Msg2Payload {
            response,
            server_rand: server_rand.clone(),
            t2: clock,
        };
        let envelope = crypto::aead_seal(&key, crypto::random_nonce(rng), &reply_payload.encode(curve));
        Ok(PendingHandshake {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            key,
            r_s,
            server_rand,
            client_rand,
            rotation,
            t2: clock,
            msg1_wire: wire,
            reply: HandshakeMsg2 { envelope },
        })
    }

    /// Processes a third message. The message carries no client id, so the
    /// pending handshakes of `source` are tried in order of creation; only a
    /// handshake whose key opens the ciphertext is affected.
    pub fn server_step4(
        &self,
        msg: &HandshakeMsg3,
        source: SocketAddr,
        clock: Timestamp,
        cfg: &HandshakeConfig,
        curve: &CurveProfile,
    ) -> Result<SessionResult, TerminateReason> {
        let result = self.try_step4(msg, source, clock, cfg, curve);
        if result.is_err() {
            self.record_failure(source, clock, cfg);
        }
        result
    }

    fn try_step4(
        &self,
        msg: &HandshakeMsg3,
        source: SocketAddr,
        clock: Timestamp,
        cfg: &HandshakeConfig,
        curve: &CurveProfile,
    ) -> Result<SessionResult, TerminateReason> {
        let mut candidates: Vec<(ClientId, PendingHandshake)> = self
            .table()
            .pending
            .iter()
            .filter(|((_, addr), p)| *addr == source && p.t2.is_fresh(clock, cfg.delta_t))
            .map(|((id, _), p)| (*id, p.clone()))
            .collect();
        if candidates.is_empty() {
            return Err(TerminateReason::NoSuchHandshake);
        }
        candidates.sort_by_key(|(_, p)| p.id);

        let (client_id, pending, plaintext) = candidates
            .into_iter()
            .find_map(|(id, p)| crypto::aead_open(&p.key, &msg.envelope).ok().map(|pt| (id, p, pt)))
            .ok_or(TerminateReason::AuthFailure)?;

        let verified = self.verify_msg3(&pending, &plaintext, clock, cfg, curve);
        let mut table = self.table();
        let slot = (client_id, source);
        let current = table.pending.get(&slot).map(|p| p.id);
        if current == Some(pending.id) {
            table.pending.remove(&slot);
        } else {
            // Completed or replaced concurrently.
            return Err(TerminateReason::NoSuchHandshake);
        }
        let secret = verified?;
        let result = derive_result(curve, secret, pending.rotation, client_id, clock);
        if let Some(next) = &result.rotated_key {
            table.keystore.insert(client_id, next.clone());
        }
        Ok(result)
    }

    fn verify_msg3(
        &self,
        pending: &PendingHandshake,
        plaintext: &[u8],
        clock: Timestamp,
        cfg: &HandshakeConfig,
        curve: &CurveProfile,
    ) -> Result<EcPoint, TerminateReason> {
        let payload = Msg3Payload::decode(plaintext, curve).ok_or(TerminateReason::Malformed)?;
        if !payload.t3.is_fresh(clock, cfg.delta_t) {
            return Err(TerminateReason::Stale);
        }
        let offset = if pending.rotation { curve.double_generator() } else { curve.generator() };
        let expected = curve
            .point_add(&pending.server_rand, offset)
            .expect("server_rand is on the curve");
        if payload.response != expected {
            return Err(TerminateReason::BadChallengeResponse);
        }
        curve
            .ecdh_shared_secret(&pending.r_s, &pending.client_rand)
            .map_err(|_| TerminateReason::DegenerateSecret)
    }
}

impl std::fmt::Debug for ServerSessionTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServerSessionTable")
            .field("pending", &self.pending_count())
            .finish_non_exhaustive()
    }
}
