//! Minimal CoAP framing: the 4-byte fixed header, a token of up to 8 bytes
//! and a payload behind the 0xFF marker. No options are emitted; options
//! found while decoding are skipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COAP_VERSION: u8 = 1;
pub const PAYLOAD_MARKER: u8 = 0xff;
pub const MAX_TOKEN_LEN: usize = 8;

/// 0.00, used by RST and empty ACKs.
pub const CODE_EMPTY: u8 = 0x00;
/// 0.02 POST, carried by the client's messages.
pub const CODE_POST: u8 = 0x02;
/// 2.04 Changed, carried by the piggybacked ACK.
pub const CODE_CHANGED: u8 = 0x44;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CoapType {
    Con = 0,
    Non = 1,
    Ack = 2,
    Rst = 3,
}

impl CoapType {
    fn from_bits(bits: u8) -> Self {
        match bits & 3 {
            0 => CoapType::Con,
            1 => CoapType::Non,
            2 => CoapType::Ack,
            _ => CoapType::Rst,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoapHeader {
    pub msg_type: CoapType,
    pub code: u8,
    pub message_id: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoapMessage {
    pub header: CoapHeader,
    pub token: Vec<u8>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoapError {
    #[error("datagram shorter than the 4-byte header")]
    ShortHeader,
    #[error("unsupported CoAP version {0}")]
    Version(u8),
    #[error("token length {0} exceeds 8")]
    TokenLength(u8),
    #[error("token runs past the end of the datagram")]
    TokenOverrun,
    #[error("malformed option")]
    BadOption,
    #[error("payload marker followed by an empty payload")]
    EmptyPayload,
}

impl CoapMessage {
    pub fn new(msg_type: CoapType, code: u8, message_id: u16, token: &[u8], payload: Vec<u8>) -> Self {
        assert!(token.len() <= MAX_TOKEN_LEN, "token longer than 8 bytes");
        CoapMessage {
            header: CoapHeader {
                msg_type,
                code,
                message_id,
            },
            token: token.to_vec(),
            payload,
        }
    }

    /// The ACK answering `self`, carrying `payload` piggybacked.
    pub fn ack(&self, payload: Vec<u8>) -> Self {
        CoapMessage::new(CoapType::Ack, CODE_CHANGED, self.header.message_id, &self.token, payload)
    }

    /// A reset for `self`. Resets are empty messages without a token.
    pub fn reset(&self) -> Self {
        CoapMessage::new(CoapType::Rst, CODE_EMPTY, self.header.message_id, &[], Vec::new())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.token.len() + 1 + self.payload.len());
        out.push(COAP_VERSION << 6 | (self.header.msg_type as u8) << 4 | self.token.len() as u8);
        out.push(self.header.code);
        out.extend_from_slice(&self.header.message_id.to_be_bytes());
        out.extend_from_slice(&self.token);
        if !self.payload.is_empty() {
            out.push(PAYLOAD_MARKER);
            out.extend_from_slice(&self.payload);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CoapError> {
        if bytes.len() < 4 {
            return Err(CoapError::ShortHeader);
        }
        let version = bytes[0] >> 6;
        if version != COAP_VERSION {
            return Err(CoapError::Version(version));
        }
        let tkl = bytes[0] & 0x0f;
        if usize::from(tkl) > MAX_TOKEN_LEN {
            return Err(CoapError::TokenLength(tkl));
        }
        let header = CoapHeader {
            msg_type: CoapType::from_bits(bytes[0] >> 4),
            code: bytes[1],
            message_id: u16::from_be_bytes([bytes[2], bytes[3]]),
        };
        let token_end = 4 + usize::from(tkl);
        let token = bytes.get(4..token_end).ok_or(CoapError::TokenOverrun)?.to_vec();
        let payload = skip_options(&bytes[token_end..])?.to_vec();
        Ok(CoapMessage { header, token, payload })
    }
}

/// Walks the option list and returns the payload after the marker.
fn skip_options(mut rest: &[u8]) -> Result<&[u8], CoapError> {
    loop {
        let Some((&first, tail)) = rest.split_first() else {
            return Ok(&[]);
        };
        if first == PAYLOAD_MARKER {
            return if tail.is_empty() { Err(CoapError::EmptyPayload) } else { Ok(tail) };
        }
        rest = tail;
        let _delta = read_extended(first >> 4, &mut rest)?;
        let len = read_extended(first & 0x0f, &mut rest)?;
        rest = rest.get(len..).ok_or(CoapError::BadOption)?;
    }
}

fn read_extended(nibble: u8, rest: &mut &[u8]) -> Result<usize, CoapError> {
    let take = |rest: &mut &[u8], n: usize| -> Result<usize, CoapError> {
        let bytes = rest.get(..n).ok_or(CoapError::BadOption)?;
        *rest = &rest[n..];
        Ok(bytes.iter().fold(0usize, |acc, &b| acc << 8 | usize::from(b)))
    };
    match nibble {
        0..=12 => Ok(usize::from(nibble)),
        13 => Ok(take(rest, 1)? + 13),
        14 => Ok(take(rest, 2)? + 269),
        _ => Err(CoapError::BadOption),
    }
}
