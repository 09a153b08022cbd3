//! LAKEE: a three-message authenticated key exchange for constrained devices.
//!
//! Client and server share a 128-bit long-term key and prove possession of it
//! by answering each other's elliptic-curve challenges inside AES-CCM
//! envelopes. The exchange yields a session key from the x-coordinate of the
//! ephemeral Diffie-Hellman point and, when the server asks for it, a rotated
//! long-term key from the y-coordinate.

pub mod adversary;
pub mod bench;
pub mod curve;
pub mod crypto;
pub mod metrics;
pub mod protocol;
pub mod transport;
