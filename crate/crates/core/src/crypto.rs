//! Symmetric primitives used by the handshake.
//!
//! - AES-128-CCM with an 11-byte nonce and a 16-byte tag seals every message.
//! - PBKDF2-HMAC-SHA512 (16 iterations, empty salt) turns a curve coordinate
//!   into 128-bit key material.
//! - SHA-1 digests the client identifier. SHA-1 is deprecated for new designs;
//!   it is kept only because the message-size budget assumes a 160-bit digest.

use std::fmt;

use aes::Aes128;
use ccm::Ccm;
use ccm::aead::array::Array;
use ccm::aead::consts::{U11, U16};
use ccm::aead::{AeadInOut, KeyInit};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha1::{Digest, Sha1};
use sha2::Sha512;
use thiserror::Error;

use crate::metrics;

pub const KEY_LEN: usize = 16;
pub const NONCE_LEN: usize = 11;
pub const TAG_LEN: usize = 16;
pub const DIGEST_LEN: usize = 20;

pub const KDF_ITERATIONS: u32 = 16;

type Aes128Ccm = Ccm<Aes128, U16, U11>;
type HmacSha512 = Hmac<Sha512>;

const SHA512_BLOCK_LEN: usize = 128;
const SHA512_OUTPUT_LEN: usize = 64;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("authentication failed")]
pub struct AuthFailure;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid key: {0}")]
pub struct KeyParseError(String);

/// The pre-shared 128-bit key Y. Never placed on the wire.
#[derive(Clone, PartialEq, Eq)]
pub struct LongTermKey([u8; KEY_LEN]);

impl LongTermKey {
    pub fn new(bytes: [u8; KEY_LEN]) -> Self {
        LongTermKey(bytes)
    }

    pub fn random<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        LongTermKey(bytes)
    }

    pub fn from_hex(text: &str) -> Result<Self, KeyParseError> {
        let bytes = hex::decode(text.trim()).map_err(|e| KeyParseError(e.to_string()))?;
        let bytes: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|v: Vec<u8>| KeyParseError(format!("expected 16 bytes, got {}", v.len())))?;
        Ok(LongTermKey(bytes))
    }

    /// Hex form for the on-disk keystore.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for LongTermKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LongTermKey(..)")
    }
}

/// Which coordinate of the shared point seeded a derived key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    X,
    Y,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    bytes: [u8; KEY_LEN],
    derived_from: Coordinate,
}

impl SessionKey {
    pub(crate) fn derive(seed: &[u8], derived_from: Coordinate) -> Self {
        SessionKey {
            bytes: kdf(seed),
            derived_from,
        }
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub fn derived_from(&self) -> Coordinate {
        self.derived_from
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey(from {:?}, ..)", self.derived_from)
    }
}

/// nonce ‖ ciphertext ‖ tag as carried on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AeadEnvelope {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl AeadEnvelope {
    pub fn wire_len(plaintext_len: usize) -> usize {
        NONCE_LEN + plaintext_len + TAG_LEN
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
    }

    /// Splits `bytes` into nonce, ciphertext and tag. `None` if too short.
    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return None;
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (ciphertext, tag) = rest.split_at(rest.len() - TAG_LEN);
        Some(AeadEnvelope {
            nonce: nonce.try_into().ok()?,
            ciphertext: ciphertext.to_vec(),
            tag: tag.try_into().ok()?,
        })
    }
}

pub fn random_nonce<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> [u8; NONCE_LEN] {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    nonce
}

fn cipher(key: &LongTermKey) -> Aes128Ccm {
    Aes128Ccm::new(&Array::from(key.0))
}

/// Encrypts and authenticates `plaintext`. The caller must never reuse a nonce
/// under the same key.
pub fn aead_seal(key: &LongTermKey, nonce: [u8; NONCE_LEN], plaintext: &[u8]) -> AeadEnvelope {
    metrics::record(|c| c.aead_seals += 1);
    let mut buffer = plaintext.to_vec();
    let tag = cipher(key)
        .encrypt_inout_detached(&Array::from(nonce), &[], buffer.as_mut_slice().into())
        .expect("CCM with an 11-byte nonce accepts messages up to 2^32 bytes");
    AeadEnvelope {
        nonce,
        ciphertext: buffer,
        tag: tag.into(),
    }
}

/// Verifies the tag and returns the plaintext. Nothing is released on failure,
/// and a wrong key is indistinguishable from tampering.
pub fn aead_open(key: &LongTermKey, envelope: &AeadEnvelope) -> Result<Vec<u8>, AuthFailure> {
    metrics::record(|c| c.aead_opens += 1);
    let mut buffer = envelope.ciphertext.clone();
    cipher(key)
        .decrypt_inout_detached(
            &Array::from(envelope.nonce),
            &[],
            buffer.as_mut_slice().into(),
            &Array::from(envelope.tag),
        )
        .map_err(|_| AuthFailure)?;
    Ok(buffer)
}

/// PBKDF2-HMAC-SHA512 with 16 iterations and an empty salt, truncated to 128
/// bits. Every HMAC evaluation is recorded as two hash invocations.
pub fn kdf(seed: &[u8]) -> [u8; KEY_LEN] {
    assert!(!seed.is_empty(), "kdf seed must be nonempty");
    let keyed = <HmacSha512 as KeyInit>::new_from_slice(seed).expect("HMAC accepts any key length");
    let key_hashes = u64::from(seed.len() > SHA512_BLOCK_LEN);

    // One output block suffices: 16 bytes < 64.
    let mut mac = keyed.clone();
    mac.update(&1u32.to_be_bytes());
    let mut u: [u8; SHA512_OUTPUT_LEN] = mac.finalize().into_bytes().into();
    let mut t = u;
    for _ in 1..KDF_ITERATIONS {
        let mut mac = keyed.clone();
        mac.update(&u);
        u = mac.finalize().into_bytes().into();
        for (acc, byte) in t.iter_mut().zip(u.iter()) {
            *acc ^= byte;
        }
    }
    metrics::record(|c| {
        c.kdf_calls += 1;
        c.hash_kdf += key_hashes + 2 * u64::from(KDF_ITERATIONS);
    });

    let mut out = [0u8; KEY_LEN];
    out.copy_from_slice(&t[..KEY_LEN]);
    out
}

/// SHA-1 over the 8-byte big-endian identifier.
pub fn hash_client_id(id: u64) -> [u8; DIGEST_LEN] {
    metrics::record(|c| c.hash_direct += 1);
    Sha1::digest(id.to_be_bytes()).into()
}
