//! Attack scripts and their TOML form.
//!
//! ```toml
//! name = "replay-msg3"
//! description = "replay the third message after the session completed"
//!
//! [[actions]]
//! type = "handshake"
//! at = 0
//!
//! [[actions]]
//! type = "replay"
//! message = "msg3"
//! at = 1
//!
//! [[expect]]
//! outcome = "server-rejects"
//! reason = "no-such-handshake"
//! ```
//!
//! Link rules (`intercept`, `delay`, `duplicate`, `tamper`, `branch-flip`,
//! `substitute`, `impersonate-server`) are armed for the whole run and match
//! datagrams by handshake message type and occurrence (0-based, counting
//! retransmissions; omit `occurrence` to match all). Timed actions run in
//! list order once virtual time reaches `at` seconds.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{MessageType, TerminateReason};
use crate::transport::sim::Direction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyChoice {
    /// A fresh random key: an outsider guessing.
    Random,
    /// The victim's long-term key; needs `insider = true`.
    Known,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointChoice {
    Valid,
    OffCurve,
    Infinity,
    SmallSubgroup,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Action {
    /// The honest client runs one handshake.
    Handshake {
        #[serde(default)]
        at: f64,
        /// Hands the client's ephemeral scalar to the attacker.
        #[serde(default)]
        leak_ephemeral: bool,
    },
    /// Capture a message and withhold it.
    #[serde(alias = "drop")]
    Intercept {
        message: MessageType,
        occurrence: Option<usize>,
    },
    Delay {
        message: MessageType,
        occurrence: Option<usize>,
        by: f64,
    },
    Duplicate {
        message: MessageType,
        occurrence: Option<usize>,
    },
    /// XOR `mask` into the handshake message at `offset`, counted from the
    /// start of `field` when given, else from the version byte.
    Tamper {
        message: MessageType,
        occurrence: Option<usize>,
        field: Option<String>,
        offset: usize,
        mask: u8,
    },
    /// Rewrites the encrypted challenge response from the P branch to the 2P
    /// branch (or back) by XORing the plaintext difference into the
    /// ciphertext. Models an attacker who knows the plaintexts but not the key.
    BranchFlip {
        message: MessageType,
        occurrence: Option<usize>,
    },
    /// Replace the handshake payload with that of an earlier occurrence of the
    /// same message, keeping the live CoAP framing.
    Substitute {
        message: MessageType,
        occurrence: usize,
        with: usize,
    },
    /// Answer the client with a second message sealed under a random key.
    ImpersonateServer { occurrence: Option<usize> },
    /// Re-send an observed datagram verbatim.
    Replay {
        message: MessageType,
        #[serde(default)]
        occurrence: usize,
        at: f64,
        source: Option<String>,
    },
    Inject {
        at: f64,
        direction: Direction,
        source: Option<String>,
        hex: String,
    },
    /// `count` first messages with random ciphertext under the client's id.
    JunkMsg1 {
        at: f64,
        count: usize,
        #[serde(default = "default_spacing")]
        spacing: f64,
        source: Option<String>,
    },
    ForgeMsg1 {
        at: f64,
        source: Option<String>,
        key: KeyChoice,
        point: PointChoice,
    },
}

fn default_spacing() -> f64 {
    0.1
}

impl Action {
    pub(crate) fn at(&self) -> Option<f64> {
        match self {
            Action::Handshake { at, .. }
            | Action::Replay { at, .. }
            | Action::Inject { at, .. }
            | Action::JunkMsg1 { at, .. }
            | Action::ForgeMsg1 { at, .. } => Some(*at),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Expected {
    /// The server terminated with `reason` (exactly `count` times if given).
    ServerRejects {
        reason: TerminateReason,
        count: Option<usize>,
    },
    /// The client terminated handshake `handshake` (default: any) with `reason`.
    ClientRejects {
        reason: TerminateReason,
        handshake: Option<usize>,
    },
    /// Datagrams were dropped by the rate limiter.
    SilentDrop {
        count: Option<usize>,
        min_count: Option<usize>,
    },
    /// The server established no session beyond one per honest handshake
    /// that completed on the client.
    NoSecondSession,
    /// Handshake `handshake` (default: every one) completed on both sides.
    Completes { handshake: Option<usize> },
    ClientTimesOut { handshake: usize },
}

impl fmt::Display for Expected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expected::ServerRejects { reason, count: Some(n) } => write!(f, "server rejects ({reason}) x{n}"),
            Expected::ServerRejects { reason, .. } => write!(f, "server rejects ({reason})"),
            Expected::ClientRejects { reason, handshake: Some(i) } => {
                write!(f, "client rejects handshake {i} ({reason})")
            }
            Expected::ClientRejects { reason, .. } => write!(f, "client rejects ({reason})"),
            Expected::SilentDrop { count: Some(n), .. } => write!(f, "silent drop x{n}"),
            Expected::SilentDrop { min_count: Some(n), .. } => write!(f, "silent drop x{n}+"),
            Expected::SilentDrop { .. } => write!(f, "silent drop"),
            Expected::NoSecondSession => write!(f, "no second session"),
            Expected::Completes { handshake: Some(i) } => write!(f, "handshake {i} completes"),
            Expected::Completes { handshake: None } => write!(f, "all handshakes complete"),
            Expected::ClientTimesOut { handshake } => write!(f, "handshake {handshake} times out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// The attacker knows the victim's long-term key.
    #[serde(default)]
    pub insider: bool,
    /// Server rotates the client's key on every handshake.
    #[serde(default)]
    pub rotate: bool,
    /// Profiles the script applies to; empty means all.
    #[serde(default)]
    pub profiles: Vec<String>,
    pub actions: Vec<Action>,
    pub expect: Vec<Expected>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("script parse error: {0}")]
    Parse(String),
    #[error("script `{script}` does not apply to profile `{profile}`")]
    ProfileMismatch { script: String, profile: String },
    #[error("action {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error("expectation refers to handshake {0}, which the script never runs")]
    NoSuchHandshake(usize),
    #[error("{message} occurrence {occurrence} was never observed")]
    NotObserved { message: String, occurrence: usize },
    #[error("script has no expectations")]
    NoExpectations,
}

impl AttackScript {
    pub fn from_toml(text: &str) -> Result<Self, ScriptError> {
        toml::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scripts always serialize")
    }

    pub fn applies_to(&self, profile: &str) -> bool {
        self.profiles.is_empty() || self.profiles.iter().any(|p| p == profile)
    }

    pub(crate) fn handshake_count(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a, Action::Handshake { .. }))
            .count()
    }
}
