use std::sync::Arc;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{self, LongTermKey};
use crate::curve::CurveProfile;
use crate::protocol::{HandshakeMessage, MessageType, message_layout};
use crate::transport::coap::CoapMessage;
use crate::transport::handshake_type;
use crate::transport::sim::{Direction, Interceptor};

use super::script::ScriptError;

#[derive(Clone, Debug)]
pub(crate) enum Effect {
    Intercept,
    Delay(Duration),
    Duplicate,
    /// `offset` counts from the first byte of the handshake message.
    Tamper { offset: usize, mask: u8 },
    BranchFlip,
    Substitute { with: usize },
    ImpersonateServer,
}

#[derive(Clone, Debug)]
pub(crate) struct Rule {
    /// Index of the script action that armed this rule.
    pub action: usize,
    pub kind: MessageType,
    pub occurrence: Option<usize>,
    pub effect: Effect,
}

/// A handshake datagram as it entered the link, before any rule ran.
#[derive(Clone, Debug)]
pub(crate) struct Observation {
    pub kind: MessageType,
    pub occurrence: usize,
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

/// The attacker's position on the link: records every handshake datagram
/// and applies the armed rules to it.
pub(crate) struct Tap {
    rules: Vec<Rule>,
    curve: Arc<CurveProfile>,
    /// Key used only to compute plaintext differences for branch flips.
    pub oracle_key: LongTermKey,
    rotate: bool,
    rng: ChaCha20Rng,
    counts: [usize; 3],
    observed: Vec<Observation>,
    pub errors: Vec<ScriptError>,
}

fn slot(kind: MessageType) -> usize {
    kind as usize - 1
}

/// Offset of the CoAP payload inside `datagram`.
fn payload_start(datagram: &[u8]) -> Option<usize> {
    let msg = CoapMessage::decode(datagram).ok()?;
    Some(datagram.len() - msg.payload.len())
}

fn with_payload(datagram: &[u8], payload: Vec<u8>) -> Option<Vec<u8>> {
    let msg = CoapMessage::decode(datagram).ok()?;
    Some(CoapMessage { payload, ..msg }.encode())
}

impl Tap {
    pub fn new(rules: Vec<Rule>, curve: Arc<CurveProfile>, oracle_key: LongTermKey, rotate: bool, seed: u64) -> Self {
        Tap {
            rules,
            curve,
            oracle_key,
            rotate,
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x7461_7000),
            counts: [0; 3],
            observed: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn observed(&self) -> &[Observation] {
        &self.observed
    }

    pub fn find(&self, kind: MessageType, occurrence: usize) -> Option<&Observation> {
        self.observed
            .iter()
            .find(|o| o.kind == kind && o.occurrence == occurrence)
    }

    fn not_observed(kind: MessageType, occurrence: usize) -> ScriptError {
        ScriptError::NotObserved {
            message: format!("{kind:?}").to_lowercase(),
            occurrence,
        }
    }

    fn branch_flip(&self, datagram: &[u8]) -> Option<Vec<u8>> {
        let curve = &*self.curve;
        let start = payload_start(datagram)?;
        let envelope = match HandshakeMessage::decode(&datagram[start..], curve).ok()? {
            HandshakeMessage::Msg2(m) => m.envelope,
            HandshakeMessage::Msg3(m) => m.envelope,
            HandshakeMessage::Msg1(_) => return None,
        };
        let plaintext = crypto::aead_open(&self.oracle_key, &envelope).ok()?;
        let w = curve.point_len();
        let response = curve.decode_point(&plaintext[..w]).ok()?;
        let g = curve.generator();
        let other = if self.rotate {
            curve.point_add(&response, &curve.negate(g))
        } else {
            curve.point_add(&response, g)
        }
        .ok()?;
        let kind = handshake_type(datagram)?;
        let layout = message_layout(kind, w, curve.nominal_point_bits() as usize);
        let field = layout.iter().find(|f| f.name == "response")?;
        let mut out = datagram.to_vec();
        let before = curve.encode_point(&response);
        let after = curve.encode_point(&other);
        for i in 0..w {
            out[start + field.offset + i] ^= before[i] ^ after[i];
        }
        Some(out)
    }

    /// A second message of the right length sealed under a key the attacker
    /// made up.
    fn impersonate(&mut self, datagram: &[u8]) -> Option<Vec<u8>> {
        let w = self.curve.point_len();
        let key = LongTermKey::random(&mut self.rng);
        let mut plaintext = vec![0u8; 2 * w + 4];
        self.rng.fill_bytes(&mut plaintext);
        let envelope = crypto::aead_seal(&key, crypto::random_nonce(&mut self.rng), &plaintext);
        let msg = crate::protocol::HandshakeMsg2 { envelope };
        with_payload(datagram, msg.encode())
    }
}

impl Interceptor for Tap {
    fn on_datagram(&mut self, direction: Direction, _: usize, bytes: &[u8], _: Duration) -> Vec<(Duration, Vec<u8>)> {
        let Some(kind) = handshake_type(bytes) else {
            return vec![(Duration::ZERO, bytes.to_vec())];
        };
        let occurrence = self.counts[slot(kind)];
        self.counts[slot(kind)] += 1;
        self.observed.push(Observation {
            kind,
            occurrence,
            direction,
            bytes: bytes.to_vec(),
        });

        let mut copies = vec![(Duration::ZERO, bytes.to_vec())];
        for i in 0..self.rules.len() {
            let rule = &self.rules[i];
            if rule.kind != kind || rule.occurrence.is_some_and(|n| n != occurrence) {
                continue;
            }
            let (action, effect) = (rule.action, rule.effect.clone());
            match effect {
                Effect::Intercept => copies.clear(),
                Effect::Delay(by) => copies.iter_mut().for_each(|(d, _)| *d += by),
                Effect::Duplicate => copies = copies.iter().cloned().chain(copies.iter().cloned()).collect(),
                Effect::Tamper { offset, mask } => {
                    for (_, data) in &mut copies {
                        match payload_start(data).map(|s| s + offset) {
                            Some(at) if at < data.len() => data[at] ^= mask,
                            _ => self.errors.push(ScriptError::Invalid {
                                index: action,
                                message: format!("tamper offset {offset} outside the message"),
                            }),
                        }
                    }
                }
                Effect::BranchFlip => {
                    for (_, data) in &mut copies {
                        match self.branch_flip(data) {
                            Some(flipped) => *data = flipped,
                            None => self.errors.push(ScriptError::Invalid {
                                index: action,
                                message: "branch flip needs an intact second or third message".into(),
                            }),
                        }
                    }
                }
                Effect::Substitute { with } => {
                    let Some(old) = self.find(kind, with).map(|o| o.bytes.clone()) else {
                        self.errors.push(Self::not_observed(kind, with));
                        continue;
                    };
                    let payload = CoapMessage::decode(&old).map(|m| m.payload).unwrap_or_default();
                    for (_, data) in &mut copies {
                        if let Some(replaced) = with_payload(data, payload.clone()) {
                            *data = replaced;
                        }
                    }
                }
                Effect::ImpersonateServer => {
                    for j in 0..copies.len() {
                        if let Some(forged) = self.impersonate(&copies[j].1) {
                            copies[j].1 = forged;
                        }
                    }
                }
            }
        }
        copies
    }
}
