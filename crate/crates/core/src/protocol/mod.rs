//! The three-message handshake.
//!
//! ```text
//! C -> S: #C, E_Y(h(#C), client_rand, T1)
//! S -> C: E_Y(client_rand + P | client_rand + 2P, server_rand, T2)
//! C -> S: E_Y(server_rand + P | server_rand + 2P, T3)
//! ```
//!
//! Adding the generator once keeps the long-term key; adding it twice tells
//! the client to rotate it. Both sides derive `session_key = KDF(secret.x)`
//! and, when rotating, `Y' = KDF(secret.y)`, where `secret = r_c·r_s·P`.

mod client;
mod dtls;
mod keystore;
pub(crate) mod message;
mod server;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{LongTermKey, SessionKey};
use crate::curve::{EcPoint, PointRejection};

pub use client::{ClientSession, ClientState};
pub use dtls::{DTLS_CIPHER_SUITE, DtlsKeyState, DtlsSessionExport, ExportError, PeerCertificate, export_dtls};
pub use keystore::{Keystore, KeystoreError};
pub use message::{
    FieldLayout, HandshakeMessage, HandshakeMsg1, HandshakeMsg2, HandshakeMsg3, MalformedMessage,
    MessageType, PROTOCOL_VERSION, message_layout,
};
pub use server::{AddressPrefix, RateLimiter, Rejection, ServerSessionTable, Step2Reply};

/// 64-bit client identifier, sent in the clear in the first message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClientId(pub u64);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// 32-bit Unix time in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Timestamp(pub u32);

impl Timestamp {
    pub fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Timestamp(secs as u32)
    }

    pub fn abs_diff(self, other: Timestamp) -> u32 {
        self.0.abs_diff(other.0)
    }

    pub fn saturating_add(self, by: Duration) -> Timestamp {
        let secs = u32::try_from(by.as_secs()).unwrap_or(u32::MAX);
        Timestamp(self.0.saturating_add(secs))
    }

    pub(crate) fn is_fresh(self, reference: Timestamp, window: Duration) -> bool {
        u64::from(self.abs_diff(reference)) <= window.as_secs()
    }
}

/// Why a handshake was aborted. Wrong key and tampering both surface as
/// `AuthFailure`.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminateReason {
    #[error("unknown client")]
    UnknownClient,
    #[error("authentication failure")]
    AuthFailure,
    #[error("client digest mismatch")]
    DigestMismatch,
    #[error("stale timestamp")]
    Stale,
    #[error("invalid point: {0}")]
    InvalidPoint(PointRejection),
    #[error("bad challenge response")]
    BadChallengeResponse,
    #[error("no such handshake")]
    NoSuchHandshake,
    #[error("malformed message")]
    Malformed,
    #[error("degenerate shared secret")]
    DegenerateSecret,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HandshakeError {
    #[error("handshake terminated: {0}")]
    Terminated(TerminateReason),
    #[error("operation not valid in state {0:?}")]
    WrongState(ClientState),
}

/// Server hook deciding whether the long-term key of a client is rotated in
/// the handshake being processed.
pub type RotationPolicy = Arc<dyn Fn(ClientId) -> bool + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("delta_t must be positive")]
    ZeroDeltaT,
    #[error("failure_threshold must be at least 1")]
    ZeroThreshold,
    #[error("prefix length {0} out of range")]
    PrefixLength(u8),
}

/// Freshness, rate-limiting and rotation parameters.
#[derive(Clone)]
pub struct HandshakeConfig {
    /// Maximum |local time - message timestamp| accepted.
    pub delta_t: Duration,
    /// Failures per source prefix within `rate_window` before blocking.
    pub failure_threshold: u32,
    pub rate_window: Duration,
    pub block_duration: Duration,
    pub ipv4_prefix_len: u8,
    pub ipv6_prefix_len: u8,
    pub rotation_policy: RotationPolicy,
}

impl Default for HandshakeConfig {
    fn default() -> Self {
        HandshakeConfig {
            delta_t: Duration::from_secs(30),
            failure_threshold: 3,
            rate_window: Duration::from_secs(60),
            block_duration: Duration::from_secs(300),
            ipv4_prefix_len: 24,
            ipv6_prefix_len: 64,
            rotation_policy: Arc::new(|_| false),
        }
    }
}

impl HandshakeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.delta_t.is_zero() {
            return Err(ConfigError::ZeroDeltaT);
        }
        if self.failure_threshold == 0 {
            return Err(ConfigError::ZeroThreshold);
        }
        if self.ipv4_prefix_len > 32 {
            return Err(ConfigError::PrefixLength(self.ipv4_prefix_len));
        }
        if self.ipv6_prefix_len > 128 {
            return Err(ConfigError::PrefixLength(self.ipv6_prefix_len));
        }
        Ok(())
    }

    pub fn with_rotation(mut self, policy: impl Fn(ClientId) -> bool + Send + Sync + 'static) -> Self {
        self.rotation_policy = Arc::new(policy);
        self
    }

    pub fn always_rotate(self) -> Self {
        self.with_rotation(|_| true)
    }
}

impl fmt::Debug for HandshakeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HandshakeConfig")
            .field("delta_t", &self.delta_t)
            .field("failure_threshold", &self.failure_threshold)
            .field("rate_window", &self.rate_window)
            .field("block_duration", &self.block_duration)
            .field("ipv4_prefix_len", &self.ipv4_prefix_len)
            .field("ipv6_prefix_len", &self.ipv6_prefix_len)
            .finish_non_exhaustive()
    }
}

/// Keys established by a completed handshake.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionResult {
    pub session_key: SessionKey,
    /// Present iff the handshake took the 2P branch.
    pub rotated_key: Option<LongTermKey>,
    pub peer: ClientId,
    pub established_at: Timestamp,
    shared_secret: EcPoint,
}

impl SessionResult {
    pub fn shared_secret(&self) -> &EcPoint {
        &self.shared_secret
    }
}

impl fmt::Debug for SessionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionResult")
            .field("peer", &self.peer)
            .field("established_at", &self.established_at)
            .field("rotated", &self.rotated_key.is_some())
            .finish_non_exhaustive()
    }
}

pub(crate) fn derive_result(
    curve: &crate::curve::CurveProfile,
    secret: EcPoint,
    rotation: bool,
    peer: ClientId,
    clock: Timestamp,
) -> SessionResult {
    let (x, y) = match &secret {
        EcPoint::Affine { x, y } => (curve.coordinate_bytes(x), curve.coordinate_bytes(y)),
        EcPoint::Infinity => unreachable!("ecdh_shared_secret never returns the identity"),
    };
    let session_key = SessionKey::derive(&x, crate::crypto::Coordinate::X);
    let rotated_key = rotation.then(|| LongTermKey::new(crate::crypto::kdf(&y)));
    SessionResult {
        session_key,
        rotated_key,
        peer,
        established_at: clock,
        shared_secret: secret,
    }
}
