use std::sync::Arc;

use rand::{CryptoRng, RngCore};

use crate::crypto::{self, LongTermKey};
use crate::curve::{CurveProfile, EcPoint, Scalar};

use super::message::{Msg1Payload, Msg2Payload, Msg3Payload};
use super::{
    ClientId, HandshakeConfig, HandshakeError, HandshakeMsg1, HandshakeMsg2, HandshakeMsg3, SessionResult,
    TerminateReason, Timestamp, derive_result,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClientState {
    Init,
    SentMsg1,
    Established,
    Failed,
}

/// Client side of one handshake. Drive it with [`step1`](Self::step1) then
/// [`step3`](Self::step3).
pub struct ClientSession {
    id: ClientId,
    key: LongTermKey,
    curve: Arc<CurveProfile>,
    state: ClientState,
    r_c: Option<Scalar>,
    client_rand: Option<EcPoint>,
    preset: Option<Scalar>,
}

impl ClientSession {
    pub fn new(id: ClientId, key: LongTermKey, curve: Arc<CurveProfile>) -> Self {
        ClientSession {
            id,
            key,
            curve,
            state: ClientState::Init,
            r_c: None,
            client_rand: None,
            preset: None,
        }
    }

    /// Makes the next [`step1`](Self::step1) use `r_c` instead of a random
    /// scalar. Meant for reproducible vectors and leakage experiments.
    pub fn preset_ephemeral(&mut self, r_c: Scalar) {
        self.preset = Some(r_c);
    }

    pub fn state(&self) -> ClientState {
        self.state
    }

    pub fn client_id(&self) -> ClientId {
        self.id
    }

    pub fn curve(&self) -> &Arc<CurveProfile> {
        &self.curve
    }

    pub fn step1<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        rng: &mut R,
        clock: Timestamp,
    ) -> Result<HandshakeMsg1, HandshakeError> {
        let r_c = match self.preset.take() {
            Some(r_c) => r_c,
            None => Scalar::random(rng, &self.curve),
        };
        self.step1_with_scalar(r_c, rng, clock)
    }

    /// [`step1`](Self::step1) with a caller-chosen ephemeral scalar; the rng
    /// only supplies the AEAD nonce.
    pub fn step1_with_scalar<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        r_c: Scalar,
        rng: &mut R,
        clock: Timestamp,
    ) -> Result<HandshakeMsg1, HandshakeError> {
        if self.state != ClientState::Init {
            return Err(HandshakeError::WrongState(self.state));
        }
        let client_rand = self
            .curve
            .scalar_mult(&r_c, self.curve.generator())
            .expect("generator is on the curve");
        let payload = Msg1Payload {
            digest: crypto::hash_client_id(self.id.0),
            client_rand: client_rand.clone(),
            t1: clock,
        };
        let envelope = crypto::aead_seal(&self.key, crypto::random_nonce(rng), &payload.encode(&self.curve));
        self.r_c = Some(r_c);
        self.client_rand = Some(client_rand);
        self.state = ClientState::SentMsg1;
        Ok(HandshakeMsg1 {
            client_id: self.id,
            envelope,
        })
    }

    pub fn step3<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        msg: &HandshakeMsg2,
        clock: Timestamp,
        cfg: &HandshakeConfig,
        rng: &mut R,
    ) -> Result<(HandshakeMsg3, SessionResult), HandshakeError> {
        if self.state != ClientState::SentMsg1 {
            return Err(HandshakeError::WrongState(self.state));
        }
        match self.try_step3(msg, clock, cfg, rng) {
            Ok(out) => {
                self.state = ClientState::Established;
                self.r_c = None;
                Ok(out)
            }
            Err(reason) => {
                self.state = ClientState::Failed;
                self.r_c = None;
                Err(HandshakeError::Terminated(reason))
            }
        }
    }

    fn try_step3<R: RngCore + CryptoRng + ?Sized>(
        &self,
        msg: &HandshakeMsg2,
        clock: Timestamp,
        cfg: &HandshakeConfig,
        rng: &mut R,
    ) -> Result<(HandshakeMsg3, SessionResult), TerminateReason> {
        let curve = &*self.curve;
        let plaintext = crypto::aead_open(&self.key, &msg.envelope).map_err(|_| TerminateReason::AuthFailure)?;
        let payload = Msg2Payload::decode(&plaintext, curve).ok_or(TerminateReason::Malformed)?;
        if !payload.t2.is_fresh(clock, cfg.delta_t) {
            return Err(TerminateReason::Stale);
        }

        // response - client_rand must be P (keep Y) or 2P (rotate).
        let client_rand = self.client_rand.as_ref().expect("set in step1");
        let offset = curve
            .point_add(&payload.response, &curve.negate(client_rand))
            .map_err(|_| TerminateReason::BadChallengeResponse)?;
        let rotation = if &offset == curve.generator() {
            false
        } else if &offset == curve.double_generator() {
            true
        } else {
            return Err(TerminateReason::BadChallengeResponse);
        };

        let server_rand = curve
            .validate_point(&payload.server_rand)
            .map_err(TerminateReason::InvalidPoint)?;
        let response = curve
            .point_add(server_rand.point(), if rotation { curve.double_generator() } else { curve.generator() })
            .expect("validated point plus generator");
        let reply = Msg3Payload { response, t3: clock };
        let envelope = crypto::aead_seal(&self.key, crypto::random_nonce(rng), &reply.encode(curve));

        let r_c = self.r_c.as_ref().expect("set in step1");
        let secret = curve
            .ecdh_shared_secret(r_c, &server_rand)
            .map_err(|_| TerminateReason::DegenerateSecret)?;
        let result = derive_result(curve, secret, rotation, self.id, clock);
        Ok((HandshakeMsg3 { envelope }, result))
    }
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("id", &self.id)
            .field("curve", &self.curve.name())
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}
