//! Wire encoding of the three handshake messages.
//!
//! Every message starts with a version byte and a type byte. The first
//! message then carries the 8-byte client id in the clear; all three end with
//! `nonce(11) ‖ ciphertext ‖ tag(16)`. Points are `x ‖ y`, each coordinate
//! `coordinate_len()` bytes big-endian, timestamps 4 bytes big-endian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{AeadEnvelope, DIGEST_LEN, NONCE_LEN, TAG_LEN};
use crate::curve::{CurveProfile, EcPoint};

use super::{ClientId, Timestamp};

pub const PROTOCOL_VERSION: u8 = 0x01;

const HEADER_LEN: usize = 2;
const CLIENT_ID_LEN: usize = 8;
const TIMESTAMP_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageType {
    Msg1 = 1,
    Msg2 = 2,
    Msg3 = 3,
}

impl MessageType {
    pub const ALL: [MessageType; 3] = [MessageType::Msg1, MessageType::Msg2, MessageType::Msg3];

    pub fn from_byte(byte: u8) -> Option<Self> {
        match byte {
            1 => Some(MessageType::Msg1),
            2 => Some(MessageType::Msg2),
            3 => Some(MessageType::Msg3),
            _ => None,
        }
    }

    pub(crate) fn plaintext_len(self, point_len: usize) -> usize {
        match self {
            MessageType::Msg1 => DIGEST_LEN + point_len + TIMESTAMP_LEN,
            MessageType::Msg2 => 2 * point_len + TIMESTAMP_LEN,
            MessageType::Msg3 => point_len + TIMESTAMP_LEN,
        }
    }

    /// Total encoded length for a curve with `point_len`-byte points.
    pub fn wire_len(self, point_len: usize) -> usize {
        let id = if self == MessageType::Msg1 { CLIENT_ID_LEN } else { 0 };
        HEADER_LEN + id + AeadEnvelope::wire_len(self.plaintext_len(point_len))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MalformedMessage {
    #[error("empty datagram")]
    Empty,
    #[error("unsupported version {0:#04x}")]
    Version(u8),
    #[error("unknown message type {0:#04x}")]
    Type(u8),
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandshakeMsg1 {
    pub client_id: ClientId,
    pub envelope: AeadEnvelope,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandshakeMsg2 {
    pub envelope: AeadEnvelope,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HandshakeMsg3 {
    pub envelope: AeadEnvelope,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HandshakeMessage {
    Msg1(HandshakeMsg1),
    Msg2(HandshakeMsg2),
    Msg3(HandshakeMsg3),
}

fn header(kind: MessageType) -> Vec<u8> {
    vec![PROTOCOL_VERSION, kind as u8]
}

impl HandshakeMsg1 {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = header(MessageType::Msg1);
        out.extend_from_slice(&self.client_id.0.to_be_bytes());
        self.envelope.encode_into(&mut out);
        out
    }
}

impl HandshakeMsg2 {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = header(MessageType::Msg2);
        self.envelope.encode_into(&mut out);
        out
    }
}

impl HandshakeMsg3 {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = header(MessageType::Msg3);
        self.envelope.encode_into(&mut out);
        out
    }
}

impl HandshakeMessage {
    pub fn kind(&self) -> MessageType {
        match self {
            HandshakeMessage::Msg1(_) => MessageType::Msg1,
            HandshakeMessage::Msg2(_) => MessageType::Msg2,
            HandshakeMessage::Msg3(_) => MessageType::Msg3,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            HandshakeMessage::Msg1(m) => m.encode(),
            HandshakeMessage::Msg2(m) => m.encode(),
            HandshakeMessage::Msg3(m) => m.encode(),
        }
    }

    /// Parses and length-checks a datagram. Lengths depend on the curve.
    pub fn decode(bytes: &[u8], curve: &CurveProfile) -> Result<Self, MalformedMessage> {
        let (&version, rest) = bytes.split_first().ok_or(MalformedMessage::Empty)?;
        if version != PROTOCOL_VERSION {
            return Err(MalformedMessage::Version(version));
        }
        let (&kind_byte, _) = rest.split_first().ok_or(MalformedMessage::Length {
            expected: HEADER_LEN,
            actual: bytes.len(),
        })?;
        let kind = MessageType::from_byte(kind_byte).ok_or(MalformedMessage::Type(kind_byte))?;
        let expected = kind.wire_len(curve.point_len());
        if bytes.len() != expected {
            return Err(MalformedMessage::Length {
                expected,
                actual: bytes.len(),
            });
        }
        let body = &bytes[HEADER_LEN..];
        let envelope_of = |b: &[u8]| AeadEnvelope::decode(b).expect("length already checked");
        Ok(match kind {
            MessageType::Msg1 => {
                let (id, rest) = body.split_at(CLIENT_ID_LEN);
                HandshakeMessage::Msg1(HandshakeMsg1 {
                    client_id: ClientId(u64::from_be_bytes(id.try_into().unwrap())),
                    envelope: envelope_of(rest),
                })
            }
            MessageType::Msg2 => HandshakeMessage::Msg2(HandshakeMsg2 {
                envelope: envelope_of(body),
            }),
            MessageType::Msg3 => HandshakeMessage::Msg3(HandshakeMsg3 {
                envelope: envelope_of(body),
            }),
        })
    }
}

// Plaintext payloads. Decoding cannot fail once the AEAD has opened a
// ciphertext whose length was checked by `HandshakeMessage::decode`, but the
// parsers still return `Option` so a short buffer is never a panic.

pub(crate) struct Msg1Payload {
    pub digest: [u8; DIGEST_LEN],
    pub client_rand: EcPoint,
    pub t1: Timestamp,
}

pub(crate) struct Msg2Payload {
    pub response: EcPoint,
    pub server_rand: EcPoint,
    pub t2: Timestamp,
}

pub(crate) struct Msg3Payload {
    pub response: EcPoint,
    pub t3: Timestamp,
}

fn read_timestamp(bytes: &[u8]) -> Option<Timestamp> {
    Some(Timestamp(u32::from_be_bytes(bytes.try_into().ok()?)))
}

impl Msg1Payload {
    pub fn encode(&self, curve: &CurveProfile) -> Vec<u8> {
        let mut out = self.digest.to_vec();
        out.extend(curve.encode_point(&self.client_rand));
        out.extend_from_slice(&self.t1.0.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8], curve: &CurveProfile) -> Option<Self> {
        let w = curve.point_len();
        if bytes.len() != MessageType::Msg1.plaintext_len(w) {
            return None;
        }
        let (digest, rest) = bytes.split_at(DIGEST_LEN);
        let (point, t) = rest.split_at(w);
        Some(Msg1Payload {
            digest: digest.try_into().ok()?,
            client_rand: curve.decode_point(point).ok()?,
            t1: read_timestamp(t)?,
        })
    }
}

impl Msg2Payload {
    pub fn encode(&self, curve: &CurveProfile) -> Vec<u8> {
        let mut out = curve.encode_point(&self.response);
        out.extend(curve.encode_point(&self.server_rand));
        out.extend_from_slice(&self.t2.0.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8], curve: &CurveProfile) -> Option<Self> {
        let w = curve.point_len();
        if bytes.len() != MessageType::Msg2.plaintext_len(w) {
            return None;
        }
        Some(Msg2Payload {
            response: curve.decode_point(&bytes[..w]).ok()?,
            server_rand: curve.decode_point(&bytes[w..2 * w]).ok()?,
            t2: read_timestamp(&bytes[2 * w..])?,
        })
    }
}

impl Msg3Payload {
    pub fn encode(&self, curve: &CurveProfile) -> Vec<u8> {
        let mut out = curve.encode_point(&self.response);
        out.extend_from_slice(&self.t3.0.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8], curve: &CurveProfile) -> Option<Self> {
        let w = curve.point_len();
        if bytes.len() != MessageType::Msg3.plaintext_len(w) {
            return None;
        }
        Some(Msg3Payload {
            response: curve.decode_point(&bytes[..w]).ok()?,
            t3: read_timestamp(&bytes[w..])?,
        })
    }
}

/// One field of a message as laid out on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldLayout {
    pub name: &'static str,
    /// Bits this implementation actually sends.
    pub wire_bits: usize,
    /// Bits counted by the nominal size model; `None` for framing that the
    /// model leaves out (version, type, AEAD nonce).
    pub nominal_bits: Option<usize>,
    /// Offset of the field in the encoded message, in bytes.
    pub offset: usize,
    /// True for fields inside the AEAD ciphertext.
    pub encrypted: bool,
}

/// Field-by-field layout of a message for a curve whose points take
/// `point_len` bytes on the wire and `nominal_point_bits` in the size model.
pub fn message_layout(kind: MessageType, point_len: usize, nominal_point_bits: usize) -> Vec<FieldLayout> {
    let mut fields: Vec<(&'static str, usize, Option<usize>, bool)> = vec![
        ("version", 8, None, false),
        ("type", 8, None, false),
    ];
    if kind == MessageType::Msg1 {
        fields.push(("client_id", 64, Some(64), false));
    }
    fields.push(("nonce", NONCE_LEN * 8, None, false));
    let point = point_len * 8;
    match kind {
        MessageType::Msg1 => {
            fields.push(("digest", DIGEST_LEN * 8, Some(DIGEST_LEN * 8), true));
            fields.push(("client_rand", point, Some(nominal_point_bits), true));
            fields.push(("t1", 32, Some(32), true));
        }
        MessageType::Msg2 => {
            fields.push(("response", point, Some(nominal_point_bits), true));
            fields.push(("server_rand", point, Some(nominal_point_bits), true));
            fields.push(("t2", 32, Some(32), true));
        }
        MessageType::Msg3 => {
            fields.push(("response", point, Some(nominal_point_bits), true));
            fields.push(("t3", 32, Some(32), true));
        }
    }
    fields.push(("tag", TAG_LEN * 8, Some(TAG_LEN * 8), false));

    let mut offset = 0;
    fields
        .into_iter()
        .map(|(name, wire_bits, nominal_bits, encrypted)| {
            let field = FieldLayout {
                name,
                wire_bits,
                nominal_bits,
                offset,
                encrypted,
            };
            offset += wire_bits / 8;
            field
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn envelope(plaintext_len: usize) -> AeadEnvelope {
        AeadEnvelope {
            nonce: [7; NONCE_LEN],
            ciphertext: vec![0xab; plaintext_len],
            tag: [9; TAG_LEN],
        }
    }

    #[test]
    fn round_trip_all_types() {
        for curve in [CurveProfile::toy(), CurveProfile::ed448()] {
            let w = curve.point_len();
            let msgs = [
                HandshakeMessage::Msg1(HandshakeMsg1 {
                    client_id: ClientId(0x0102030405060708),
                    envelope: envelope(MessageType::Msg1.plaintext_len(w)),
                }),
                HandshakeMessage::Msg2(HandshakeMsg2 {
                    envelope: envelope(MessageType::Msg2.plaintext_len(w)),
                }),
                HandshakeMessage::Msg3(HandshakeMsg3 {
                    envelope: envelope(MessageType::Msg3.plaintext_len(w)),
                }),
            ];
            for msg in msgs {
                let bytes = msg.encode();
                assert_eq!(bytes.len(), msg.kind().wire_len(w));
                assert_eq!(HandshakeMessage::decode(&bytes, &curve).unwrap(), msg);
            }
        }
    }

    #[test]
    fn rejects_bad_framing() {
        let curve = CurveProfile::toy();
        assert_eq!(HandshakeMessage::decode(&[], &curve), Err(MalformedMessage::Empty));
        assert_eq!(HandshakeMessage::decode(&[2, 1], &curve), Err(MalformedMessage::Version(2)));
        assert_eq!(HandshakeMessage::decode(&[1, 9], &curve), Err(MalformedMessage::Type(9)));
        assert!(matches!(
            HandshakeMessage::decode(&[1], &curve),
            Err(MalformedMessage::Length { .. })
        ));
        let mut bytes = HandshakeMsg3 {
            envelope: envelope(MessageType::Msg3.plaintext_len(curve.point_len())),
        }
        .encode();
        bytes.push(0);
        assert!(matches!(
            HandshakeMessage::decode(&bytes, &curve),
            Err(MalformedMessage::Length { .. })
        ));
    }

    #[test]
    fn layout_matches_encoding_and_nominal_sizes() {
        let curve = CurveProfile::ed448();
        let w = curve.point_len();
        let nominal = |kind| -> usize {
            message_layout(kind, w, 224).iter().filter_map(|f| f.nominal_bits).sum()
        };
        assert_eq!(nominal(MessageType::Msg1), 608);
        assert_eq!(nominal(MessageType::Msg2), 608);
        assert_eq!(nominal(MessageType::Msg3), 384);
        for kind in MessageType::ALL {
            let layout = message_layout(kind, w, 224);
            let wire: usize = layout.iter().map(|f| f.wire_bits).sum();
            assert_eq!(wire / 8, kind.wire_len(w));
            let last = layout.last().unwrap();
            assert_eq!(last.offset + last.wire_bits / 8, kind.wire_len(w));
        }
    }

    #[test]
    fn payload_round_trip() {
        let curve = CurveProfile::toy();
        let p = Msg2Payload {
            response: EcPoint::affine(6u32, 3u32),
            server_rand: EcPoint::affine(5u32, 1u32),
            t2: Timestamp(0xdeadbeef),
        };
        let q = Msg2Payload::decode(&p.encode(&curve), &curve).unwrap();
        assert_eq!(q.response, p.response);
        assert_eq!(q.server_rand, p.server_rand);
        assert_eq!(q.t2, p.t2);
        assert!(Msg2Payload::decode(&[0; 3], &curve).is_none());
    }
}
