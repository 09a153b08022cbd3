//! Seeding a DTLS 1.2 PSK session from a completed handshake.

use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::crypto::{self, KEY_LEN};
use crate::curve::{CurveProfile, EcPoint};

use super::SessionResult;

pub const DTLS_CIPHER_SUITE: &str = "TLS_PSK_WITH_AES_128_CCM_8";

/// Explicit nonce length of the CCM_8 record layer.
pub const RECORD_NONCE_LEN: usize = 8;
/// Implicit (salt) part of the CCM nonce.
pub const IMPLICIT_IV_LEN: usize = 4;

#[derive(Clone, PartialEq, Eq)]
pub struct DtlsKeyState {
    pub key: [u8; KEY_LEN],
    pub nonce: [u8; RECORD_NONCE_LEN],
}

impl fmt::Debug for DtlsKeyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DtlsKeyState(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeerCertificate {
    /// PSK suites never carry one.
    None,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DtlsSessionExport {
    pub cipher_suite: &'static str,
    pub read_state: DtlsKeyState,
    pub write_state: DtlsKeyState,
    pub client_iv: [u8; IMPLICIT_IV_LEN],
    pub server_iv: [u8; IMPLICIT_IV_LEN],
    pub sequence_number: u64,
    pub peer_certificate: PeerCertificate,
}

impl DtlsSessionExport {
    /// The same session seen from the other endpoint: read and write states
    /// swap, everything else is shared.
    pub fn mirrored(&self) -> Self {
        DtlsSessionExport {
            read_state: self.write_state.clone(),
            write_state: self.read_state.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExportError {
    #[error("shared secret is the identity")]
    Identity,
    #[error("shared secret does not belong to this session")]
    SecretMismatch,
}

/// Builds the client-side DTLS state: the read key is `KDF(secret.x)` (the
/// session key), the write key `KDF(secret.y)`. Nonces and IVs are fresh
/// random values and the sequence number starts at zero.
pub fn export_dtls<R: RngCore + CryptoRng + ?Sized>(
    result: &SessionResult,
    secret: &EcPoint,
    curve: &CurveProfile,
    rng: &mut R,
) -> Result<DtlsSessionExport, ExportError> {
    let EcPoint::Affine { x, y } = secret else {
        return Err(ExportError::Identity);
    };
    let read_key = crypto::kdf(&curve.coordinate_bytes(x));
    if &read_key != result.session_key.as_bytes() {
        return Err(ExportError::SecretMismatch);
    }
    let write_key = crypto::kdf(&curve.coordinate_bytes(y));

    let mut state = |key| {
        let mut nonce = [0u8; RECORD_NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        DtlsKeyState { key, nonce }
    };
    let read_state = state(read_key);
    let write_state = state(write_key);
    let mut client_iv = [0u8; IMPLICIT_IV_LEN];
    let mut server_iv = [0u8; IMPLICIT_IV_LEN];
    rng.fill_bytes(&mut client_iv);
    rng.fill_bytes(&mut server_iv);

    Ok(DtlsSessionExport {
        cipher_suite: DTLS_CIPHER_SUITE,
        read_state,
        write_state,
        client_iv,
        server_iv,
        sequence_number: 0,
        peer_certificate: PeerCertificate::None,
    })
}
