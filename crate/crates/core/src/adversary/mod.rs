//! Scripted active attacker on the simulated link.
//!
//! The attacker sees every datagram and can drop, delay, duplicate, rewrite
//! and inject traffic, but holds no keys unless a script declares it an
//! insider. Every run builds a fresh world from its seed, so a script and a
//! seed always produce the same report.

mod builtin;
mod probe;
pub mod script;
mod sweep;
mod tap;

use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::crypto::{self, AeadEnvelope, KEY_LEN, LongTermKey, SessionKey, TAG_LEN};
use crate::curve::{CurveProfile, EcPoint, Scalar};
use crate::metrics::{self, OpCounters};
use crate::protocol::message::{Msg1Payload, Msg2Payload, Msg3Payload};
use crate::protocol::{
    ClientId, ClientSession, HandshakeConfig, HandshakeMessage, HandshakeMsg1, Keystore, MessageType,
    ServerSessionTable, SessionResult, TerminateReason, Timestamp, message_layout,
};
use crate::transport::coap::{CODE_POST, CoapMessage, CoapType};
use crate::transport::sim::{Direction, EventSummary, LinkRecord, SimConfig, SimNet};
use crate::transport::{Channel, ClientFailure, RetransmitPolicy, ServerEndpoint, ServerEvent, run_client_handshake};

pub use builtin::{builtin, builtin_names, builtins};
pub use probe::invalid_curve_probe;
pub use script::{Action, AttackScript, Expected, KeyChoice, PointChoice, ScriptError};
pub use sweep::{SweepReport, all_targets, mutation_sweep, mutation_sweep_targets};

use tap::{Effect, Rule, Tap};

/// Default source of attacker datagrams, outside the client's prefix.
pub const ATTACKER_ADDR: &str = "203.0.113.66:6666";

const KEY_DOMAIN: u64 = 0x6b65_7900;
const CLIENT_DOMAIN: u64 = 0x636c_6900;
const ATTACKER_DOMAIN: u64 = 0x6164_7600;

/// Everything a run is built from. The long-term key and all randomness
/// derive from `seed`.
#[derive(Clone)]
pub struct World {
    pub curve: Arc<CurveProfile>,
    pub seed: u64,
    pub client_id: ClientId,
    pub handshake: HandshakeConfig,
    pub retransmit: RetransmitPolicy,
    pub sim: SimConfig,
}

impl World {
    pub fn new(curve: Arc<CurveProfile>, seed: u64) -> Self {
        World {
            curve,
            seed,
            client_id: ClientId(0x1ae_0001),
            handshake: HandshakeConfig::default(),
            retransmit: RetransmitPolicy::default(),
            sim: SimConfig {
                server_seed: seed,
                ..SimConfig::default()
            },
        }
    }

    pub fn profile(&self) -> &str {
        self.curve.name()
    }

    /// The long-term key client and server start with.
    pub fn initial_key(&self) -> LongTermKey {
        LongTermKey::random(&mut ChaCha20Rng::seed_from_u64(self.seed ^ KEY_DOMAIN))
    }

    fn attacker_addr(&self) -> SocketAddr {
        ATTACKER_ADDR.parse().expect("constant address")
    }

    fn resolve(&self, source: Option<&str>, default: SocketAddr) -> Result<SocketAddr, String> {
        match source {
            None => Ok(default),
            Some("client") => Ok(self.sim.client_addr),
            Some("server") => Ok(self.sim.server_addr),
            Some("attacker") => Ok(self.attacker_addr()),
            Some(other) => other
                .parse()
                .map_err(|_| format!("source `{other}` is not client, server, attacker or ip:port")),
        }
    }
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("World")
            .field("profile", &self.profile())
            .field("seed", &self.seed)
            .field("client_id", &self.client_id)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum HandshakeOutcome {
    Established { rotated: bool },
    Terminated { reason: TerminateReason },
    Reset,
    Timeout { attempts: u32 },
    Failed { message: String },
}

impl fmt::Display for HandshakeOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HandshakeOutcome::Established { rotated: false } => f.write_str("established"),
            HandshakeOutcome::Established { rotated: true } => f.write_str("established, key rotated"),
            HandshakeOutcome::Terminated { reason } => write!(f, "client terminated: {reason}"),
            HandshakeOutcome::Reset => f.write_str("reset by server"),
            HandshakeOutcome::Timeout { attempts } => write!(f, "timed out after {attempts} sends"),
            HandshakeOutcome::Failed { message } => write!(f, "failed: {message}"),
        }
    }
}

/// One honest client handshake as the client saw it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HandshakeRecord {
    pub index: usize,
    pub started_ms: u64,
    pub finished_ms: u64,
    pub outcome: HandshakeOutcome,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ServerEventRecord {
    pub at_ms: u64,
    pub source: String,
    pub event: EventSummary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Check {
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    pub script: String,
    pub profile: String,
    pub seed: u64,
    pub handshakes: Vec<HandshakeRecord>,
    pub server_events: Vec<ServerEventRecord>,
    pub checks: Vec<Check>,
    /// Some session the server established used a key the attacker can
    /// compute. Fails the report regardless of the checks.
    pub attacker_success: bool,
    pub transcript: Vec<LinkRecord>,
    pub pass: bool,
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{} [{}, seed {}]: {}\n",
            self.script,
            self.profile,
            self.seed,
            if self.pass { "PASS" } else { "FAIL" }
        );
        for h in &self.handshakes {
            out += &format!("  handshake {} at {} ms: {}\n", h.index, h.started_ms, h.outcome);
        }
        let tally = tally(self.server_events.iter().map(|e| &e.event));
        if !tally.is_empty() {
            let parts: Vec<String> = tally.iter().map(|(k, n)| format!("{k} x{n}")).collect();
            out += &format!("  server: {}\n", parts.join(", "));
        }
        for c in &self.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            out += &format!("  {mark} {}: observed {}\n", c.expected, c.observed);
        }
        out += &format!(
            "  attacker derived an accepted session key: {}\n",
            if self.attacker_success { "YES" } else { "no" }
        );
        out
    }
}

fn event_label(e: &EventSummary) -> String {
    match e {
        EventSummary::Replied { retransmission: false } => "replied".into(),
        EventSummary::Replied { retransmission: true } => "replied from cache".into(),
        EventSummary::Established { .. } => "established".into(),
        EventSummary::Terminated(r) => format!("terminated ({r})"),
        EventSummary::Dropped => "dropped".into(),
        EventSummary::Ignored => "ignored".into(),
    }
}

fn tally<'a>(events: impl Iterator<Item = &'a EventSummary>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for e in events {
        *out.entry(event_label(e)).or_insert(0) += 1;
    }
    out
}

fn ms(d: Duration) -> u64 {
    d.as_millis() as u64
}

/// Byte range of `name` inside a message. `ciphertext` spans every
/// encrypted field.
pub(crate) fn field_span(kind: MessageType, name: &str, curve: &CurveProfile) -> Option<(usize, usize)> {
    let layout = message_layout(kind, curve.point_len(), curve.nominal_point_bits() as usize);
    if name == "ciphertext" {
        let first = layout.iter().find(|f| f.encrypted)?;
        let len = layout.iter().filter(|f| f.encrypted).map(|f| f.wire_bits / 8).sum();
        return Some((first.offset, len));
    }
    layout
        .iter()
        .find(|f| f.name == name)
        .map(|f| (f.offset, f.wire_bits / 8))
}

fn prepare(script: &AttackScript, world: &World) -> Result<Vec<Rule>, ScriptError> {
    if !script.applies_to(world.profile()) {
        return Err(ScriptError::ProfileMismatch {
            script: script.name.clone(),
            profile: world.profile().to_string(),
        });
    }
    if script.expect.is_empty() {
        return Err(ScriptError::NoExpectations);
    }
    let curve = &*world.curve;
    let mut rules = Vec::new();
    for (index, action) in script.actions.iter().enumerate() {
        let invalid = |message: String| ScriptError::Invalid { index, message };
        if let Some(at) = action.at()
            && !(at.is_finite() && at >= 0.0)
        {
            return Err(invalid(format!("time {at} is not a non-negative number of seconds")));
        }
        let rule = match action {
            Action::Intercept { message, occurrence } => Some((*message, *occurrence, Effect::Intercept)),
            Action::Delay { message, occurrence, by } => {
                if !(by.is_finite() && *by >= 0.0) {
                    return Err(invalid(format!("delay {by} is not a non-negative number of seconds")));
                }
                Some((*message, *occurrence, Effect::Delay(Duration::from_secs_f64(*by))))
            }
            Action::Duplicate { message, occurrence } => Some((*message, *occurrence, Effect::Duplicate)),
            Action::Tamper {
                message,
                occurrence,
                field,
                offset,
                mask,
            } => {
                let (start, len) = match field {
                    Some(name) => field_span(*message, name, curve)
                        .ok_or_else(|| invalid(format!("{message:?} has no field `{name}`")))?,
                    None => (0, message.wire_len(curve.point_len())),
                };
                if *offset >= len {
                    return Err(invalid(format!("offset {offset} is outside a {len}-byte range")));
                }
                Some((
                    *message,
                    *occurrence,
                    Effect::Tamper {
                        offset: start + offset,
                        mask: *mask,
                    },
                ))
            }
            Action::BranchFlip { message, occurrence } => {
                if *message == MessageType::Msg1 {
                    return Err(invalid("the first message carries no challenge response".into()));
                }
                Some((*message, *occurrence, Effect::BranchFlip))
            }
            Action::Substitute {
                message,
                occurrence,
                with,
            } => {
                if with >= occurrence {
                    return Err(invalid(format!("occurrence {occurrence} cannot be replaced by later {with}")));
                }
                Some((*message, Some(*occurrence), Effect::Substitute { with: *with }))
            }
            Action::ImpersonateServer { occurrence } => {
                Some((MessageType::Msg2, *occurrence, Effect::ImpersonateServer))
            }
            Action::Handshake { .. } => None,
            Action::Replay { source, .. } => {
                world.resolve(source.as_deref(), world.attacker_addr()).map_err(invalid)?;
                None
            }
            Action::Inject { source, hex, .. } => {
                world.resolve(source.as_deref(), world.attacker_addr()).map_err(invalid)?;
                hex::decode(hex).map_err(|e| invalid(format!("bad hex: {e}")))?;
                None
            }
            Action::JunkMsg1 {
                count, spacing, source, ..
            } => {
                world.resolve(source.as_deref(), world.attacker_addr()).map_err(invalid)?;
                if *count == 0 {
                    return Err(invalid("count must be at least 1".into()));
                }
                if !(spacing.is_finite() && *spacing >= 0.0) {
                    return Err(invalid(format!("spacing {spacing} is not a non-negative number of seconds")));
                }
                None
            }
            Action::ForgeMsg1 { source, key, point, .. } => {
                world.resolve(source.as_deref(), world.attacker_addr()).map_err(invalid)?;
                if *key == KeyChoice::Known && !script.insider {
                    return Err(invalid("sealing under the victim's key needs `insider = true`".into()));
                }
                if *point == PointChoice::SmallSubgroup && curve.cofactor() == &1u32.into() {
                    return Err(invalid(format!("{} has no small subgroup", curve.name())));
                }
                None
            }
        };
        if let Some((kind, occurrence, effect)) = rule {
            rules.push(Rule {
                action: index,
                kind,
                occurrence,
                effect,
            });
        }
    }
    let count = script.handshake_count();
    for e in &script.expect {
        let index = match e {
            Expected::ClientRejects { handshake: Some(i), .. }
            | Expected::Completes { handshake: Some(i) }
            | Expected::ClientTimesOut { handshake: i } => Some(*i),
            _ => None,
        };
        if let Some(i) = index
            && i >= count
        {
            return Err(ScriptError::NoSuchHandshake(i));
        }
    }
    Ok(rules)
}

fn coap_con<R: RngCore>(payload: Vec<u8>, rng: &mut R) -> Vec<u8> {
    let message_id = rng.next_u32() as u16;
    let token = rng.next_u32().to_be_bytes();
    CoapMessage::new(CoapType::Con, CODE_POST, message_id, &token, payload).encode()
}

/// An encoding of `choice` that passes the wire parser.
pub(crate) fn crafted_point(curve: &CurveProfile, choice: PointChoice) -> EcPoint {
    let g = curve.generator();
    match choice {
        PointChoice::Valid => g.clone(),
        PointChoice::Infinity => EcPoint::Infinity,
        PointChoice::OffCurve => {
            let x = g.x().expect("generator is affine").clone();
            let mut y = g.y().expect("generator is affine").clone();
            loop {
                y = (y + 1u32) % curve.prime();
                let p = EcPoint::affine(x.clone(), y.clone());
                if !curve.is_on_curve(&p) {
                    return p;
                }
            }
        }
        // (0, -1) has order 2 on any Edwards curve.
        PointChoice::SmallSubgroup => EcPoint::affine(0u32, curve.prime() - 1u32),
    }
}

pub(crate) fn forge_msg1<R: RngCore + rand::CryptoRng>(
    world: &World,
    key: &LongTermKey,
    point: &EcPoint,
    clock: Timestamp,
    rng: &mut R,
) -> Vec<u8> {
    let payload = Msg1Payload {
        digest: crypto::hash_client_id(world.client_id.0),
        client_rand: point.clone(),
        t1: clock,
    };
    let envelope = crypto::aead_seal(key, crypto::random_nonce(rng), &payload.encode(&world.curve));
    let msg = HandshakeMsg1 {
        client_id: world.client_id,
        envelope,
    };
    coap_con(msg.encode(), rng)
}

/// A first message under the victim's id with random nonce, ciphertext and tag.
fn junk_msg1<R: RngCore + rand::CryptoRng>(world: &World, rng: &mut R) -> Vec<u8> {
    let mut ciphertext = vec![0u8; MessageType::Msg1.plaintext_len(world.curve.point_len())];
    rng.fill_bytes(&mut ciphertext);
    let mut tag = [0u8; TAG_LEN];
    rng.fill_bytes(&mut tag);
    let msg = HandshakeMsg1 {
        client_id: world.client_id,
        envelope: AeadEnvelope {
            nonce: crypto::random_nonce(rng),
            ciphertext,
            tag,
        },
    };
    coap_con(msg.encode(), rng)
}

/// State left behind by one scripted run.
pub(crate) struct Execution {
    net: SimNet<Tap>,
    handshakes: Vec<HandshakeRecord>,
    /// Session key the honest client ended each handshake with.
    client_keys: Vec<Option<SessionKey>>,
    /// Ephemeral scalars the attacker knows: leaked or self-chosen.
    scalars: Vec<Scalar>,
    insider_keys: Vec<LongTermKey>,
    /// Work done while the link ran: both endpoints and the tap.
    link_ops: OpCounters,
}

pub(crate) fn execute(script: &AttackScript, world: &World) -> Result<Execution, ScriptError> {
    let rules = prepare(script, world)?;
    let curve = world.curve.clone();
    let mut cfg = world.handshake.clone();
    if script.rotate {
        cfg = cfg.always_rotate();
    }
    let key0 = world.initial_key();
    let mut keystore = Keystore::new();
    keystore.insert(world.client_id, key0.clone());
    let endpoint = ServerEndpoint::new(Arc::new(ServerSessionTable::new(keystore)), curve.clone(), cfg.clone());
    let tap = Tap::new(rules, curve.clone(), key0.clone(), script.rotate, world.seed);
    let mut net = SimNet::new(world.sim.clone(), endpoint, tap);
    let mut client_rng = ChaCha20Rng::seed_from_u64(world.seed ^ CLIENT_DOMAIN);
    let mut attacker_rng = ChaCha20Rng::seed_from_u64(world.seed ^ ATTACKER_DOMAIN);

    let mut key = key0.clone();
    let mut handshakes = Vec::new();
    let mut client_keys = Vec::new();
    let mut scalars = Vec::new();
    let mut link_ops = OpCounters::default();

    for (index, action) in script.actions.iter().enumerate() {
        let Some(at) = action.at() else { continue };
        let at = Duration::from_secs_f64(at);
        let now = net.now();
        if at > now {
            let ((), ops) = metrics::measure(|| net.advance(at - now));
            link_ops += ops;
        }
        let now = net.now();
        let resolve = |source: &Option<String>, default| {
            world
                .resolve(source.as_deref(), default)
                .map_err(|message| ScriptError::Invalid { index, message })
        };
        match action {
            Action::Handshake { leak_ephemeral, .. } => {
                let mut session = ClientSession::new(world.client_id, key.clone(), curve.clone());
                if *leak_ephemeral {
                    let r = Scalar::random(&mut client_rng, &curve);
                    scalars.push(r.clone());
                    session.preset_ephemeral(r);
                }
                let (out, ops) = metrics::measure(|| {
                    run_client_handshake(&mut net, &mut session, &cfg, &world.retransmit, &mut client_rng)
                });
                link_ops += ops;
                let (outcome, session_key) = match out {
                    Ok(report) => {
                        let rotated = report.result.rotated_key.is_some();
                        if let Some(next) = report.result.rotated_key {
                            key = next;
                            net.interceptor_mut().oracle_key = key.clone();
                        }
                        (HandshakeOutcome::Established { rotated }, Some(report.result.session_key))
                    }
                    Err(ClientFailure::Terminated(reason)) => (HandshakeOutcome::Terminated { reason }, None),
                    Err(ClientFailure::Reset) => (HandshakeOutcome::Reset, None),
                    Err(ClientFailure::Timeout { attempts }) => (HandshakeOutcome::Timeout { attempts }, None),
                    Err(e) => (HandshakeOutcome::Failed { message: e.to_string() }, None),
                };
                handshakes.push(HandshakeRecord {
                    index: handshakes.len(),
                    started_ms: ms(now),
                    finished_ms: ms(net.now()),
                    outcome,
                });
                client_keys.push(session_key);
            }
            Action::Replay {
                message,
                occurrence,
                source,
                ..
            } => {
                let obs = net
                    .interceptor()
                    .find(*message, *occurrence)
                    .ok_or_else(|| ScriptError::NotObserved {
                        message: format!("{message:?}").to_lowercase(),
                        occurrence: *occurrence,
                    })?;
                let (direction, bytes) = (obs.direction, obs.bytes.clone());
                let default = match direction {
                    Direction::ClientToServer => world.sim.client_addr,
                    Direction::ServerToClient => world.sim.server_addr,
                };
                let source = resolve(source, default)?;
                net.inject(now, direction, source, bytes);
            }
            Action::Inject {
                direction, source, hex, ..
            } => {
                let bytes = hex::decode(hex).expect("checked in prepare");
                let default = match direction {
                    Direction::ClientToServer => world.attacker_addr(),
                    Direction::ServerToClient => world.sim.server_addr,
                };
                let source = resolve(source, default)?;
                net.inject(now, *direction, source, bytes);
            }
            Action::JunkMsg1 {
                count, spacing, source, ..
            } => {
                let source = resolve(source, world.attacker_addr())?;
                for k in 0..*count {
                    let bytes = junk_msg1(world, &mut attacker_rng);
                    let at = now + Duration::from_secs_f64(spacing * k as f64);
                    net.inject(at, Direction::ClientToServer, source, bytes);
                }
            }
            Action::ForgeMsg1 {
                source,
                key: choice,
                point,
                ..
            } => {
                let source = resolve(source, world.attacker_addr())?;
                let sealing_key = match choice {
                    KeyChoice::Known => key.clone(),
                    KeyChoice::Random => LongTermKey::random(&mut attacker_rng),
                };
                let p = match point {
                    PointChoice::Valid => {
                        let r = Scalar::random(&mut attacker_rng, &curve);
                        let p = curve.scalar_mult(&r, curve.generator()).expect("generator is on the curve");
                        scalars.push(r);
                        p
                    }
                    other => crafted_point(&curve, *other),
                };
                let bytes = forge_msg1(world, &sealing_key, &p, net.clock(), &mut attacker_rng);
                net.inject(now, Direction::ClientToServer, source, bytes);
            }
            _ => unreachable!("untimed actions become link rules"),
        }
    }
    let ((), ops) = metrics::measure(|| net.run_until_idle());
    link_ops += ops;
    if let Some(e) = net.interceptor().errors.first() {
        return Err(e.clone());
    }
    Ok(Execution {
        net,
        handshakes,
        client_keys,
        scalars,
        insider_keys: if script.insider { vec![key0] } else { Vec::new() },
        link_ops,
    })
}

impl Execution {
    fn established(&self) -> Vec<&SessionResult> {
        self.net.established()
    }

    fn server_reasons(&self) -> Vec<TerminateReason> {
        self.net
            .server_events()
            .iter()
            .filter_map(|(_, _, e)| match e {
                ServerEvent::Terminated(r) => Some(*r),
                _ => None,
            })
            .collect()
    }

    /// Session keys the attacker can compute: its scalars against every point
    /// it can read, which needs an insider key since all points are sealed.
    fn attacker_keys(&self, curve: &CurveProfile) -> Vec<[u8; KEY_LEN]> {
        let mut points = Vec::new();
        for key in &self.insider_keys {
            for obs in self.net.interceptor().observed() {
                let Ok(coap) = CoapMessage::decode(&obs.bytes) else { continue };
                let Ok(msg) = HandshakeMessage::decode(&coap.payload, curve) else { continue };
                let envelope = match &msg {
                    HandshakeMessage::Msg1(m) => &m.envelope,
                    HandshakeMessage::Msg2(m) => &m.envelope,
                    HandshakeMessage::Msg3(m) => &m.envelope,
                };
                let Ok(plain) = crypto::aead_open(key, envelope) else { continue };
                match msg {
                    HandshakeMessage::Msg1(_) => points.extend(Msg1Payload::decode(&plain, curve).map(|p| p.client_rand)),
                    HandshakeMessage::Msg2(_) => {
                        if let Some(p) = Msg2Payload::decode(&plain, curve) {
                            points.push(p.response);
                            points.push(p.server_rand);
                        }
                    }
                    HandshakeMessage::Msg3(_) => points.extend(Msg3Payload::decode(&plain, curve).map(|p| p.response)),
                }
            }
        }
        let mut keys = Vec::new();
        for r in &self.scalars {
            for q in &points {
                if let Ok(valid) = curve.validate_point(q)
                    && let Ok(secret) = curve.ecdh_shared_secret(r, &valid)
                    && let Some(x) = secret.x()
                {
                    keys.push(crypto::kdf(&curve.coordinate_bytes(x)));
                }
            }
        }
        keys
    }

    fn check(&self, expected: &Expected) -> Check {
        let established = self.established();
        let outcomes = || {
            let parts: Vec<String> = self.handshakes.iter().map(|h| format!("#{} {}", h.index, h.outcome)).collect();
            if parts.is_empty() { "no handshakes".to_string() } else { parts.join("; ") }
        };
        let completed_on_both = |i: usize| {
            self.client_keys
                .get(i)
                .and_then(Option::as_ref)
                .is_some_and(|k| established.iter().any(|r| &r.session_key == k))
        };
        let (observed, pass) = match expected {
            Expected::ServerRejects { reason, count } => {
                let n = self.server_reasons().iter().filter(|r| *r == reason).count();
                (format!("{n} x {reason}"), count.map_or(n > 0, |c| n == c))
            }
            Expected::ClientRejects { reason, handshake } => {
                let hit = |h: &HandshakeRecord| h.outcome == HandshakeOutcome::Terminated { reason: *reason };
                let pass = match handshake {
                    Some(i) => hit(&self.handshakes[*i]),
                    None => self.handshakes.iter().any(hit),
                };
                (outcomes(), pass)
            }
            Expected::SilentDrop { count, min_count } => {
                let d = self
                    .net
                    .server_events()
                    .iter()
                    .filter(|(_, _, e)| matches!(e, ServerEvent::Dropped))
                    .count();
                let pass = match (count, min_count) {
                    (Some(c), _) => d == *c,
                    (None, Some(m)) => d >= *m,
                    (None, None) => d > 0,
                };
                (format!("{d} dropped"), pass)
            }
            Expected::NoSecondSession => {
                let client_sessions = self.client_keys.iter().flatten().count();
                let pass = established.len() <= client_sessions
                    && established
                        .iter()
                        .all(|r| self.client_keys.iter().flatten().any(|k| k == &r.session_key));
                (
                    format!("{} server sessions for {} client sessions", established.len(), client_sessions),
                    pass,
                )
            }
            Expected::Completes { handshake } => {
                let pass = match handshake {
                    Some(i) => completed_on_both(*i),
                    None => !self.handshakes.is_empty() && (0..self.handshakes.len()).all(completed_on_both),
                };
                (format!("{}; {} server sessions", outcomes(), established.len()), pass)
            }
            Expected::ClientTimesOut { handshake } => (
                outcomes(),
                matches!(self.handshakes[*handshake].outcome, HandshakeOutcome::Timeout { .. }),
            ),
        };
        Check {
            expected: expected.to_string(),
            observed,
            pass,
        }
    }

    fn report(&self, name: &str, expect: &[Expected], world: &World) -> AttackReport {
        let checks: Vec<Check> = expect.iter().map(|e| self.check(e)).collect();
        let known = self.attacker_keys(&world.curve);
        let attacker_success = self
            .established()
            .iter()
            .any(|r| known.contains(r.session_key.as_bytes()));
        AttackReport {
            script: name.to_string(),
            profile: world.profile().to_string(),
            seed: world.seed,
            handshakes: self.handshakes.clone(),
            server_events: self
                .net
                .server_events()
                .iter()
                .map(|(at, source, e)| ServerEventRecord {
                    at_ms: ms(*at),
                    source: source.to_string(),
                    event: EventSummary::from(e),
                })
                .collect(),
            pass: checks.iter().all(|c| c.pass) && !attacker_success,
            checks,
            attacker_success,
            transcript: self.net.transcript().to_vec(),
        }
    }
}

/// Runs `script` in a fresh world and checks its expectations.
pub fn run_attack(script: &AttackScript, world: &World) -> Result<AttackReport, ScriptError> {
    let exec = execute(script, world)?;
    Ok(exec.report(&script.name, &script.expect, world))
}
