use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use lakee_core::crypto::{self, AeadEnvelope, Coordinate, LongTermKey};
use lakee_core::curve::{CurveProfile, EcPoint, PointRejection, Scalar};
use lakee_core::metrics;
use lakee_core::protocol::*;
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const T0: Timestamp = Timestamp(1_700_000_000);
const ID: ClientId = ClientId(0x0102_0304_0506_0708);

fn src(s: &str) -> SocketAddr {
    s.parse().unwrap()
}

struct World {
    curve: Arc<CurveProfile>,
    key: LongTermKey,
    server: ServerSessionTable,
    cfg: HandshakeConfig,
    rng: ChaCha20Rng,
}

impl World {
    fn new(curve: Arc<CurveProfile>, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let key = LongTermKey::random(&mut rng);
        let mut ks = Keystore::new();
        ks.insert(ID, key.clone());
        World {
            curve,
            key,
            server: ServerSessionTable::new(ks),
            cfg: HandshakeConfig::default(),
            rng,
        }
    }

    fn client(&self) -> ClientSession {
        ClientSession::new(ID, self.key.clone(), self.curve.clone())
    }

    fn step2(&mut self, msg: &HandshakeMsg1, from: &str, t: Timestamp) -> Result<Step2Reply, Rejection> {
        self.server
            .server_step2(msg, src(from), t, &self.cfg, &self.curve, &mut self.rng)
    }

    fn step4(&mut self, msg: &HandshakeMsg3, from: &str, t: Timestamp) -> Result<SessionResult, TerminateReason> {
        self.server.server_step4(msg, src(from), t, &self.cfg, &self.curve)
    }

    fn handshake(&mut self) -> (SessionResult, SessionResult) {
        let mut client = self.client();
        let m1 = client.step1(&mut self.rng, T0).unwrap();
        let m2 = self.step2(&m1, "10.0.0.1:5000", T0).unwrap().msg;
        let (m3, c) = client.step3(&m2, T0, &self.cfg, &mut self.rng).unwrap();
        let s = self.step4(&m3, "10.0.0.1:5000", T0).unwrap();
        (c, s)
    }
}

fn seal_msg1(curve: &CurveProfile, key: &LongTermKey, digest: [u8; 20], point: &[u8], t: Timestamp) -> HandshakeMsg1 {
    let mut pt = digest.to_vec();
    pt.extend_from_slice(point);
    pt.extend_from_slice(&t.0.to_be_bytes());
    assert_eq!(pt.len(), 24 + curve.point_len());
    HandshakeMsg1 {
        client_id: ID,
        envelope: crypto::aead_seal(key, [0x42; 11], &pt),
    }
}

#[test]
fn honest_handshake_agrees_on_both_curves() {
    for curve in [CurveProfile::toy(), CurveProfile::ed448()] {
        let mut w = World::new(curve, 1);
        let (c, s) = w.handshake();
        assert_eq!(c.session_key, s.session_key);
        assert_eq!(c.shared_secret(), s.shared_secret());
        assert_eq!(c.session_key.derived_from(), Coordinate::X);
        assert!(c.rotated_key.is_none() && s.rotated_key.is_none());
        assert_eq!(s.peer, ID);
        assert_eq!(w.server.pending_count(), 0);
        assert_eq!(w.server.long_term_key(ID), Some(w.key.clone()));
    }
}

#[test]
fn operation_counts_per_handshake() {
    for (curve, ecpm) in [(CurveProfile::ed448(), 6), (CurveProfile::toy(), 4)] {
        for rotate in [false, true] {
            let mut w = World::new(curve.clone(), 2);
            if rotate {
                w.cfg = w.cfg.clone().always_rotate();
            }
            let (_, ops) = metrics::measure(|| w.handshake());
            assert_eq!(ops.ecpm, ecpm, "{}", curve.name());
            assert_eq!(ops.ecpa, 4);
            assert_eq!(ops.aead_seals, 3);
            assert_eq!(ops.aead_opens, 3);
            assert_eq!(ops.hash_direct, 2);
            let kdfs = if rotate { 4 } else { 2 };
            assert_eq!(ops.kdf_calls, kdfs);
            assert_eq!(ops.hash_kdf, 32 * kdfs);
        }
    }
}

#[test]
fn toy_session_key_matches_reference_kdf() {
    // Find a seed whose handshake lands on the shared point (3, 16) and check
    // both derived keys against values computed with Python's hashlib.
    let target = EcPoint::affine(3u32, 16u32);
    for seed in 0..500 {
        let mut w = World::new(CurveProfile::toy(), seed);
        w.cfg = w.cfg.clone().always_rotate();
        let (c, s) = w.handshake();
        if c.shared_secret() != &target {
            continue;
        }
        assert_eq!(hex::encode(c.session_key.as_bytes()), "8f15c2c1b005b8f06741c23e956d06cc");
        assert_eq!(
            hex::encode(c.rotated_key.as_ref().unwrap().as_bytes()),
            "ba7435a93bd82db2224ba1d933c24ce3"
        );
        assert_eq!(c.rotated_key, s.rotated_key);
        return;
    }
    panic!("no seed reached the target secret");
}

#[test]
fn shared_secret_is_product_of_scalars() {
    let curve = CurveProfile::toy();
    let mut w = World::new(curve.clone(), 3);
    let mut client = w.client();
    let r_c = Scalar::from_u64(7, &curve).unwrap();
    let m1 = client.step1_with_scalar(r_c.clone(), &mut w.rng, T0).unwrap();
    let m2 = w.step2(&m1, "10.0.0.1:1", T0).unwrap().msg;
    let (_, c) = client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap();
    // Recover r_s by search and compare with (r_c * r_s)·G.
    let pt = crypto::aead_open(&w.key, &m2.envelope).unwrap();
    let server_rand = curve.decode_point(&pt[2..4]).unwrap();
    let r_s = (1u64..19)
        .find(|k| curve.scalar_mult(&Scalar::from_u64(*k, &curve).unwrap(), curve.generator()).unwrap() == server_rand)
        .unwrap();
    let k = Scalar::from_u64(7 * r_s % 19, &curve).unwrap();
    assert_eq!(c.shared_secret(), &curve.scalar_mult(&k, curve.generator()).unwrap());
}

#[test]
fn rotation_replaces_key_and_next_handshake_uses_it() {
    let mut w = World::new(CurveProfile::toy(), 4);
    w.cfg = w.cfg.clone().always_rotate();
    let (c, s) = w.handshake();
    let next = c.rotated_key.clone().unwrap();
    assert_eq!(Some(next.clone()), s.rotated_key);
    assert_eq!(w.server.long_term_key(ID), Some(next.clone()));
    assert_ne!(next, w.key);

    // Old key is now rejected.
    let mut stale_client = w.client();
    let m1 = stale_client.step1(&mut w.rng, T0).unwrap();
    assert_eq!(
        w.step2(&m1, "10.0.0.1:1", T0).unwrap_err(),
        Rejection::Terminate(TerminateReason::AuthFailure)
    );

    w.key = next;
    w.cfg = HandshakeConfig::default();
    let (c2, s2) = w.handshake();
    assert_eq!(c2.session_key, s2.session_key);
}

#[test]
fn rotation_policy_is_per_client() {
    let mut w = World::new(CurveProfile::toy(), 5);
    w.cfg = w.cfg.clone().with_rotation(|id| id.0 == 99);
    let (c, _) = w.handshake();
    assert!(c.rotated_key.is_none());
}

#[test]
fn unknown_client_and_wrong_key() {
    let mut w = World::new(CurveProfile::toy(), 6);
    let mut stranger = ClientSession::new(ClientId(5), w.key.clone(), w.curve.clone());
    let m1 = stranger.step1(&mut w.rng, T0).unwrap();
    assert_eq!(
        w.step2(&m1, "10.0.0.1:1", T0).unwrap_err(),
        Rejection::Terminate(TerminateReason::UnknownClient)
    );
    let mut imposter = ClientSession::new(ID, LongTermKey::new([0; 16]), w.curve.clone());
    let m1 = imposter.step1(&mut w.rng, T0).unwrap();
    assert_eq!(
        w.step2(&m1, "10.0.1.1:1", T0).unwrap_err(),
        Rejection::Terminate(TerminateReason::AuthFailure)
    );
}

#[test]
fn digest_mismatch() {
    let mut w = World::new(CurveProfile::toy(), 7);
    let point = w.curve.encode_point(w.curve.generator());
    let m1 = seal_msg1(&w.curve, &w.key, [0; 20], &point, T0);
    assert_eq!(
        w.step2(&m1, "10.0.0.1:1", T0).unwrap_err(),
        Rejection::Terminate(TerminateReason::DigestMismatch)
    );
}

#[test]
fn freshness_boundary_on_first_message() {
    let mut w = World::new(CurveProfile::toy(), 8);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    assert!(w.step2(&m1, "10.0.0.1:1", T0.saturating_add(Duration::from_secs(30))).is_ok());
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    assert_eq!(
        w.step2(&m1, "10.0.1.1:1", T0.saturating_add(Duration::from_secs(31))).unwrap_err(),
        Rejection::Terminate(TerminateReason::Stale)
    );
}

#[test]
fn invalid_points_in_first_message() {
    let toy = World::new(CurveProfile::toy(), 9);
    let ed = World::new(CurveProfile::ed448(), 9);
    let digest = crypto::hash_client_id(ID.0);
    let p = ed.curve.prime().clone();
    let cases = [
        (toy, vec![0u8, 0], PointRejection::InfinityPoint),
        (World::new(CurveProfile::toy(), 9), vec![1, 1], PointRejection::OffCurve),
        (ed, {
            let mut b = vec![0u8; 56];
            b.extend(CurveProfile::ed448().coordinate_bytes(&(&p - 1u32)));
            b
        }, PointRejection::SmallSubgroup),
        (World::new(CurveProfile::ed448(), 9), {
            let mut b = vec![0u8; 56];
            b.extend(CurveProfile::ed448().coordinate_bytes(&BigUint::from(1u32)));
            b
        }, PointRejection::InfinityPoint),
    ];
    for (mut w, point, why) in cases {
        let m1 = seal_msg1(&w.curve, &w.key, digest, &point, T0);
        assert_eq!(
            w.step2(&m1, "10.0.0.1:1", T0).unwrap_err(),
            Rejection::Terminate(TerminateReason::InvalidPoint(why))
        );
    }
}

#[test]
fn tampered_second_message_fails_authentication() {
    let mut w = World::new(CurveProfile::toy(), 10);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    let mut m2 = w.step2(&m1, "10.0.0.1:1", T0).unwrap().msg;
    m2.envelope.ciphertext[0] ^= 1;
    assert_eq!(
        client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap_err(),
        HandshakeError::Terminated(TerminateReason::AuthFailure)
    );
    assert_eq!(client.state(), ClientState::Failed);
    assert!(matches!(
        client.step3(&m2, T0, &w.cfg, &mut w.rng),
        Err(HandshakeError::WrongState(ClientState::Failed))
    ));
}

fn forged_msg2(w: &World, client_rand: &EcPoint, k: u64, t: Timestamp) -> HandshakeMsg2 {
    let curve = &w.curve;
    let offset = curve.scalar_mult(&Scalar::from_u64(k, curve).unwrap(), curve.generator()).unwrap();
    let response = curve.point_add(client_rand, &offset).unwrap();
    let mut pt = curve.encode_point(&response);
    pt.extend(curve.encode_point(curve.double_generator()));
    pt.extend_from_slice(&t.0.to_be_bytes());
    HandshakeMsg2 {
        envelope: crypto::aead_seal(&w.key, [1; 11], &pt),
    }
}

#[test]
fn challenge_response_must_be_p_or_2p() {
    let curve = CurveProfile::toy();
    for (k, ok) in [(1, true), (2, true), (3, false), (18, false)] {
        let mut w = World::new(curve.clone(), 11);
        let mut client = w.client();
        let r_c = Scalar::from_u64(4, &curve).unwrap();
        client.step1_with_scalar(r_c, &mut w.rng, T0).unwrap();
        let client_rand = EcPoint::affine(3u32, 1u32);
        let m2 = forged_msg2(&w, &client_rand, k, T0);
        let out = client.step3(&m2, T0, &w.cfg, &mut w.rng);
        if ok {
            let (_, result) = out.unwrap();
            assert_eq!(result.rotated_key.is_some(), k == 2);
        } else {
            assert_eq!(out.unwrap_err(), HandshakeError::Terminated(TerminateReason::BadChallengeResponse));
        }
    }
}

#[test]
fn stale_second_message() {
    let mut w = World::new(CurveProfile::toy(), 12);
    let mut client = w.client();
    client.step1(&mut w.rng, T0).unwrap();
    let m2 = forged_msg2(&w, &EcPoint::Infinity, 1, T0);
    let late = T0.saturating_add(Duration::from_secs(31));
    assert_eq!(
        client.step3(&m2, late, &w.cfg, &mut w.rng).unwrap_err(),
        HandshakeError::Terminated(TerminateReason::Stale)
    );
}

#[test]
fn third_message_replay_and_bad_response() {
    let mut w = World::new(CurveProfile::toy(), 13);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    let m2 = w.step2(&m1, "10.0.0.1:1", T0).unwrap().msg;
    let (m3, _) = client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap();
    w.step4(&m3, "10.0.0.1:1", T0).unwrap();
    assert_eq!(w.step4(&m3, "10.0.0.1:1", T0).unwrap_err(), TerminateReason::NoSuchHandshake);

    // Insider-built third message with the wrong offset.
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    w.step2(&m1, "10.0.0.2:1", T0).unwrap();
    let mut pt = w.curve.encode_point(w.curve.generator());
    pt.extend_from_slice(&T0.0.to_be_bytes());
    let bogus = HandshakeMsg3 {
        envelope: crypto::aead_seal(&w.key, [3; 11], &pt),
    };
    assert_eq!(w.step4(&bogus, "10.0.0.2:1", T0).unwrap_err(), TerminateReason::BadChallengeResponse);
    assert_eq!(w.server.pending_count(), 0);
}

#[test]
fn forged_third_message_does_not_abort_pending_handshake() {
    let mut w = World::new(CurveProfile::toy(), 14);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    let m2 = w.step2(&m1, "10.0.0.1:1", T0).unwrap().msg;
    let junk = HandshakeMsg3 {
        envelope: AeadEnvelope {
            nonce: [0; 11],
            ciphertext: vec![0; 6],
            tag: [0; 16],
        },
    };
    assert_eq!(w.step4(&junk, "10.0.0.1:1", T0).unwrap_err(), TerminateReason::AuthFailure);
    let (m3, c) = client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap();
    assert_eq!(w.step4(&m3, "10.0.0.1:1", T0).unwrap().session_key, c.session_key);
}

#[test]
fn third_message_from_other_source_is_unknown() {
    let mut w = World::new(CurveProfile::toy(), 15);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    let m2 = w.step2(&m1, "10.0.0.1:1", T0).unwrap().msg;
    let (m3, _) = client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap();
    assert_eq!(w.step4(&m3, "10.0.0.1:2", T0).unwrap_err(), TerminateReason::NoSuchHandshake);
}

#[test]
fn duplicate_first_message_gets_cached_reply() {
    let mut w = World::new(CurveProfile::toy(), 16);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    let first = w.step2(&m1, "10.0.0.1:1", T0).unwrap();
    let (again, ops) = metrics::measure(|| w.step2(&m1, "10.0.0.1:1", T0).unwrap());
    assert!(!first.retransmission && again.retransmission);
    assert_eq!(first.msg, again.msg);
    assert_eq!(ops.ecpm + ops.aead_opens + ops.aead_seals, 0);
    assert_eq!(w.server.pending_count(), 1);
}

#[test]
fn rate_limit_blocks_prefix_then_recovers() {
    let mut w = World::new(CurveProfile::toy(), 17);
    let mut junk_client = ClientSession::new(ID, LongTermKey::new([9; 16]), w.curve.clone());
    let junk = junk_client.step1(&mut w.rng, T0).unwrap();
    let outcomes: Vec<_> = (0..6)
        .map(|i| w.step2(&junk, &format!("10.9.9.{}:7", i + 1), T0).unwrap_err())
        .collect();
    assert_eq!(outcomes[..3], [Rejection::Terminate(TerminateReason::AuthFailure); 3]);
    assert_eq!(outcomes[3..], [Rejection::SilentDrop; 3]);

    // Blocked prefix drops even honest traffic; other prefixes are served.
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    assert_eq!(w.step2(&m1, "10.9.9.200:1", T0).unwrap_err(), Rejection::SilentDrop);
    assert!(w.step2(&m1, "10.9.8.1:1", T0).is_ok());

    let later = T0.saturating_add(Duration::from_secs(300));
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, later).unwrap();
    assert!(w.step2(&m1, "10.9.9.1:7", later).is_ok());
}

#[test]
fn client_state_machine() {
    let mut w = World::new(CurveProfile::toy(), 18);
    let mut client = w.client();
    assert_eq!(client.state(), ClientState::Init);
    let m2 = forged_msg2(&w, &EcPoint::Infinity, 1, T0);
    assert_eq!(
        client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap_err(),
        HandshakeError::WrongState(ClientState::Init)
    );
    client.step1(&mut w.rng, T0).unwrap();
    assert_eq!(client.state(), ClientState::SentMsg1);
    assert!(matches!(
        client.step1(&mut w.rng, T0),
        Err(HandshakeError::WrongState(ClientState::SentMsg1))
    ));
}

#[test]
fn expired_handshakes_are_purged() {
    let mut w = World::new(CurveProfile::toy(), 19);
    let mut client = w.client();
    let m1 = client.step1(&mut w.rng, T0).unwrap();
    let m2 = w.step2(&m1, "10.0.0.1:1", T0).unwrap().msg;
    assert_eq!(w.server.purge_expired(T0.saturating_add(Duration::from_secs(30)), &w.cfg), 0);
    let late = T0.saturating_add(Duration::from_secs(31));
    assert_eq!(w.server.purge_expired(late, &w.cfg), 1);
    let (m3, _) = client.step3(&m2, T0, &w.cfg, &mut w.rng).unwrap();
    assert_eq!(w.step4(&m3, "10.0.0.1:1", T0).unwrap_err(), TerminateReason::NoSuchHandshake);
}

#[test]
fn dtls_export_fields() {
    let mut w = World::new(CurveProfile::ed448(), 20);
    let (c, s) = w.handshake();
    let secret = c.shared_secret().clone();
    let export = export_dtls(&c, &secret, &w.curve, &mut w.rng).unwrap();
    assert_eq!(export.cipher_suite, "TLS_PSK_WITH_AES_128_CCM_8");
    assert_eq!(&export.read_state.key, c.session_key.as_bytes());
    let y = w.curve.coordinate_bytes(secret.y().unwrap());
    assert_eq!(export.write_state.key, crypto::kdf(&y));
    assert_ne!(export.read_state.nonce, export.write_state.nonce);
    assert_eq!(export.sequence_number, 0);
    assert_eq!(export.peer_certificate, PeerCertificate::None);
    let mirrored = export.mirrored();
    assert_eq!(mirrored.read_state, export.write_state);
    assert_eq!(mirrored.write_state, export.read_state);
    assert_eq!(mirrored.client_iv, export.client_iv);
    assert!(!format!("{export:?}").contains(&hex::encode(export.read_state.key)));

    let other = export_dtls(&s, &w.curve.negate(&secret), &w.curve, &mut w.rng);
    assert_eq!(other.unwrap_err(), ExportError::SecretMismatch);
    assert_eq!(
        export_dtls(&s, &EcPoint::Infinity, &w.curve, &mut w.rng).unwrap_err(),
        ExportError::Identity
    );
}

#[test]
fn concurrent_handshakes_share_one_table() {
    let curve = CurveProfile::toy();
    let mut ks = Keystore::new();
    let keys: Vec<_> = (0..8u64).map(|i| LongTermKey::new([i as u8 + 1; 16])).collect();
    for (i, k) in keys.iter().enumerate() {
        ks.insert(ClientId(i as u64), k.clone());
    }
    let server = Arc::new(ServerSessionTable::new(ks));
    let cfg = HandshakeConfig::default().always_rotate();
    std::thread::scope(|scope| {
        for i in 0..keys.len() {
            let (server, cfg, curve) = (server.clone(), cfg.clone(), curve.clone());
            scope.spawn(move || {
                let mut rng = ChaCha20Rng::seed_from_u64(i as u64);
                // Toy rotated keys collide (few distinct y values), so each
                // client gets its own port for third-message lookup.
                let from = SocketAddr::new("10.0.0.1".parse().unwrap(), 4000 + i as u16);
                for _ in 0..20 {
                    let key = server.long_term_key(ClientId(i as u64)).unwrap();
                    let mut client = ClientSession::new(ClientId(i as u64), key, curve.clone());
                    let m1 = client.step1(&mut rng, T0).unwrap();
                    let m2 = server.server_step2(&m1, from, T0, &cfg, &curve, &mut rng).unwrap().msg;
                    let (m3, c) = client.step3(&m2, T0, &cfg, &mut rng).unwrap();
                    let s = server.server_step4(&m3, from, T0, &cfg, &curve).unwrap();
                    assert_eq!(c.session_key, s.session_key);
                }
            });
        }
    });
    assert_eq!(server.pending_count(), 0);
    for (i, k) in keys.iter().enumerate() {
        assert_ne!(server.long_term_key(ClientId(i as u64)).as_ref(), Some(k));
    }
}

#[test]
fn third_messages_from_one_source_are_matched_by_key() {
    let curve = CurveProfile::toy();
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let mut ks = Keystore::new();
    let (ka, kb) = (LongTermKey::new([0xa; 16]), LongTermKey::new([0xb; 16]));
    ks.insert(ClientId(1), ka.clone());
    ks.insert(ClientId(2), kb.clone());
    let server = ServerSessionTable::new(ks);
    let cfg = HandshakeConfig::default();
    let from = src("10.0.0.1:9");
    let mut a = ClientSession::new(ClientId(1), ka, curve.clone());
    let mut b = ClientSession::new(ClientId(2), kb, curve.clone());
    let a1 = a.step1(&mut rng, T0).unwrap();
    let b1 = b.step1(&mut rng, T0).unwrap();
    let a2 = server.server_step2(&a1, from, T0, &cfg, &curve, &mut rng).unwrap().msg;
    let b2 = server.server_step2(&b1, from, T0, &cfg, &curve, &mut rng).unwrap().msg;
    let (b3, rb) = b.step3(&b2, T0, &cfg, &mut rng).unwrap();
    let (a3, ra) = a.step3(&a2, T0, &cfg, &mut rng).unwrap();
    assert_eq!(server.server_step4(&b3, from, T0, &cfg, &curve).unwrap().peer, rb.peer);
    assert_eq!(server.server_step4(&a3, from, T0, &cfg, &curve).unwrap().session_key, ra.session_key);
}
