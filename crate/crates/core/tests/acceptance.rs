//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p lakee-core --test acceptance`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lakee_core::adversary::{self, World};
use lakee_core::bench::{measure_handshake, nominal_sizes};
use lakee_core::crypto::{self, LongTermKey};
use lakee_core::curve::{CurveProfile, EcPoint, PointRejection, Scalar};
use lakee_core::protocol::*;
use lakee_core::transport::sim::{Direction, Interceptor, LinkSchedule, SimConfig, SimNet};
use lakee_core::transport::{ClientFailure, ClientReport, RetransmitPolicy, ServerEndpoint, ServerEvent, run_client_handshake};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const ID: ClientId = ClientId(0xacce_0001);
const T0: Timestamp = Timestamp(1_700_000_000);

fn source() -> SocketAddr {
    "10.1.0.1:5683".parse().unwrap()
}

/// One handshake driven directly through the state machines.
fn direct_handshake(
    table: &ServerSessionTable,
    key: LongTermKey,
    curve: &Arc<CurveProfile>,
    cfg: &HandshakeConfig,
    rng: &mut ChaCha20Rng,
) -> Result<(SessionResult, SessionResult), String> {
    let mut client = ClientSession::new(ID, key, curve.clone());
    let m1 = client.step1(rng, T0).map_err(|e| format!("step1: {e}"))?;
    let m2 = table
        .server_step2(&m1, source(), T0, cfg, curve, rng)
        .map_err(|e| format!("step2: {e:?}"))?
        .msg;
    let (m3, c) = client.step3(&m2, T0, cfg, rng).map_err(|e| format!("step3: {e}"))?;
    let s = table
        .server_step4(&m3, source(), T0, cfg, curve)
        .map_err(|e| format!("step4: {e}"))?;
    Ok((c, s))
}

fn key_agreement() -> Verdict {
    const RUNS: u64 = 1000;
    let started = Instant::now();
    let mut followups = 0;
    for curve in [CurveProfile::toy(), CurveProfile::ed448()] {
        for rotate in [false, true] {
            let mut cfg = HandshakeConfig::default();
            if rotate {
                cfg = cfg.always_rotate();
            }
            for seed in 0..RUNS {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let key = LongTermKey::random(&mut rng);
                let mut ks = Keystore::new();
                ks.insert(ID, key.clone());
                let table = ServerSessionTable::new(ks);
                let tag = format!("{} rotate={rotate} seed={seed}", curve.name());
                let (c, s) = direct_handshake(&table, key.clone(), &curve, &cfg, &mut rng)
                    .map_err(|e| format!("{tag}: {e}"))?;
                ensure!(c.session_key == s.session_key, "{tag}: session keys differ");
                if !rotate {
                    ensure!(c.rotated_key.is_none() && s.rotated_key.is_none(), "{tag}: unexpected rotation");
                    continue;
                }
                let (Some(cy), Some(sy)) = (&c.rotated_key, &s.rotated_key) else {
                    return Err(format!("{tag}: rotation missing"));
                };
                ensure!(cy == sy, "{tag}: rotated keys differ");
                ensure!(*cy != key, "{tag}: rotated key equals the old key");
                ensure!(table.long_term_key(ID).as_ref() == Some(sy), "{tag}: keystore not updated");
                let plain = HandshakeConfig::default();
                let (c2, s2) = direct_handshake(&table, cy.clone(), &curve, &plain, &mut rng)
                    .map_err(|e| format!("{tag}: follow-up under rotated key: {e}"))?;
                ensure!(c2.session_key == s2.session_key, "{tag}: follow-up keys differ");
                followups += 1;
            }
        }
    }
    Ok(format!(
        "{} handshakes agree, {followups} follow-ups under the rotated key succeed ({:.1} s)",
        4 * RUNS,
        started.elapsed().as_secs_f64()
    ))
}

fn message_count() -> Verdict {
    for curve in [CurveProfile::toy(), CurveProfile::ed448()] {
        for rotate in [false, true] {
            let m = measure_handshake(curve.clone(), rotate, 3).map_err(|e| e.to_string())?;
            ensure!(m.messages == 3, "{} rotate={rotate}: {} messages", m.profile, m.messages);
            ensure!(m.keys_match, "{} rotate={rotate}: keys differ", m.profile);
        }
    }
    Ok("3 messages delivered per handshake on both profiles, with and without rotation".into())
}

fn sizes() -> Verdict {
    let m = nominal_sizes(224).map_err(|e| e.to_string())?;
    ensure!(m.totals() == [608, 608, 384], "totals {:?}", m.totals());
    ensure!(m.total_bits == 1600, "total {}", m.total_bits);
    Ok("608 / 608 / 384 bits, 1600 total at 224-bit points".into())
}

fn op_counts() -> Verdict {
    let mut kdf_hashes = Vec::new();
    for rotate in [false, true] {
        for seed in [1, 2, 3] {
            let m = measure_handshake(CurveProfile::ed448(), rotate, seed).map_err(|e| e.to_string())?;
            let o = m.ops;
            ensure!(o.ecpm == 6, "rotate={rotate} seed={seed}: {} scalar multiplications", o.ecpm);
            ensure!(o.aead_seals == 3, "rotate={rotate} seed={seed}: {} AEAD seals", o.aead_seals);
            ensure!(o.hash_direct == 2, "rotate={rotate} seed={seed}: {} direct hashes", o.hash_direct);
            kdf_hashes.push((rotate, o.hash_kdf, o.kdf_calls));
        }
    }
    let (plain, rotating): (Vec<&(bool, u64, u64)>, Vec<_>) = kdf_hashes.iter().partition(|k| !k.0);
    ensure!(plain.windows(2).all(|w| w[0] == w[1]), "KDF hash count varies: {plain:?}");
    ensure!(rotating.windows(2).all(|w| w[0] == w[1]), "KDF hash count varies: {rotating:?}");
    Ok(format!(
        "Ed448: 6 ECPM, 3 seals, 2 direct hashes; KDF-internal hashes {} over {} KDF calls ({} with rotation), stable",
        plain[0].1, plain[0].2, rotating[0].1
    ))
}

fn scenarios() -> Verdict {
    let mut runs = 0;
    for (world, seeds) in [
        (World::new(CurveProfile::toy(), 0), [1u64, 2, 3]),
        (World::new(CurveProfile::ed448(), 0), [5, 6, 7]),
    ] {
        let profile = world.profile().to_string();
        for seed in seeds {
            let world = World::new(world.curve.clone(), seed);
            for script in adversary::builtins(&profile) {
                let report = adversary::run_attack(&script, &world).map_err(|e| format!("{}: {e}", script.name))?;
                ensure!(report.pass, "{} on {profile} seed {seed} failed:\n{}", script.name, report.render_text());
                let again = adversary::run_attack(&script, &world).map_err(|e| e.to_string())?;
                ensure!(report.to_json() == again.to_json(), "{} is not deterministic", script.name);
                runs += 1;
            }
            let probe = adversary::invalid_curve_probe(&world);
            ensure!(probe.pass, "invalid-curve probe on {profile}:\n{}", probe.render_text());
            runs += 1;
        }
    }
    Ok(format!("{runs} scenario runs pass and replay identically"))
}

fn sweep() -> Verdict {
    let started = Instant::now();
    let report = adversary::mutation_sweep(&World::new(CurveProfile::toy(), 1), 10_000, 2024);
    ensure!(report.control_completed, "unmutated control run did not complete");
    ensure!(report.established == 0, "{} mutated runs established a session", report.established);
    ensure!(report.pass, "{}", report.render_text());
    Ok(format!(
        "10000 mutations, 0 sessions established, {} rejection classes ({:.1} s)",
        report.histogram.len(),
        started.elapsed().as_secs_f64()
    ))
}

/// Affine arithmetic on y^2 = x^3 + 2x + 2 over GF(17), written out here so
/// the comparison does not depend on the library.
mod oracle {
    pub const P: i64 = 17;
    pub type Pt = Option<(i64, i64)>;

    fn md(v: i64) -> i64 {
        v.rem_euclid(P)
    }

    fn inv(v: i64) -> i64 {
        (1..P).find(|i| md(v * i) == 1).unwrap()
    }

    pub fn on_curve(x: i64, y: i64) -> bool {
        md(y * y - x * x * x - 2 * x - 2) == 0
    }

    pub fn add(p: Pt, q: Pt) -> Pt {
        let (Some((x1, y1)), Some((x2, y2))) = (p, q) else {
            return p.or(q);
        };
        if x1 == x2 && md(y1 + y2) == 0 {
            return None;
        }
        let l = if (x1, y1) == (x2, y2) {
            md((3 * x1 * x1 + 2) * inv(2 * y1))
        } else {
            md((y2 - y1) * inv(x2 - x1))
        };
        let x3 = md(l * l - x1 - x2);
        Some((x3, md(l * (x1 - x3) - y1)))
    }
}

fn lib_point(p: oracle::Pt) -> EcPoint {
    match p {
        None => EcPoint::Infinity,
        Some((x, y)) => EcPoint::affine(x as u32, y as u32),
    }
}

fn toy_oracle() -> Verdict {
    let curve = CurveProfile::toy();
    let n = 19u64;
    ensure!(curve.order() == &n.into(), "toy order is {}", curve.order());
    let mut group = Vec::new();
    for x in 0..oracle::P {
        for y in 0..oracle::P {
            if oracle::on_curve(x, y) {
                group.push((x, y));
            }
        }
    }
    ensure!(group.len() as u64 + 1 == n, "{} affine points", group.len());
    let mut checked = 0;
    for &p in &group {
        let mut acc: oracle::Pt = None;
        for k in 1..n {
            acc = oracle::add(acc, Some(p));
            let s = Scalar::from_u64(k, &curve).map_err(|e| e.to_string())?;
            let got = curve.scalar_mult(&s, &lib_point(Some(p))).map_err(|e| e.to_string())?;
            ensure!(got == lib_point(acc), "{k}·{p:?}: library {got:?}, oracle {acc:?}");
            checked += 1;
        }
        ensure!(oracle::add(acc, Some(p)).is_none(), "{p:?} does not have order 19");
    }
    let mut accepted = 0;
    for x in 0..oracle::P {
        for y in 0..oracle::P {
            let verdict = curve.validate_point(&EcPoint::affine(x as u32, y as u32));
            match (group.contains(&(x, y)), verdict) {
                (true, Ok(_)) => accepted += 1,
                (false, Err(PointRejection::OffCurve)) => {}
                (member, v) => return Err(format!("validate_point({x}, {y}) = {v:?}, group member {member}")),
            }
        }
    }
    ensure!(
        curve.validate_point(&EcPoint::Infinity) == Err(PointRejection::InfinityPoint),
        "identity was not rejected"
    );
    Ok(format!(
        "{checked} scalar products match repeated addition; validation accepts exactly the {accepted} non-identity points"
    ))
}

fn ed448_smoke() -> Verdict {
    let m = measure_handshake(CurveProfile::ed448(), false, 8).map_err(|e| e.to_string())?;
    ensure!(m.keys_match, "keys differ");
    ensure!(m.wall < Duration::from_secs(1), "handshake took {:?}", m.wall);
    Ok(format!("full Ed448 handshake in {:.1} ms (timing only, not compared to any figure)", m.wall.as_secs_f64() * 1e3))
}

fn dtls_export() -> Verdict {
    let curve = CurveProfile::ed448();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let key = LongTermKey::random(&mut rng);
    let mut ks = Keystore::new();
    ks.insert(ID, key.clone());
    let table = ServerSessionTable::new(ks);
    let (c, s) = direct_handshake(&table, key, &curve, &HandshakeConfig::default(), &mut rng)?;
    let secret = c.shared_secret().clone();
    let (Some(x), Some(y)) = (secret.x(), secret.y()) else {
        return Err("shared secret is the identity".into());
    };
    let export = export_dtls(&c, &secret, &curve, &mut rng).map_err(|e| e.to_string())?;
    ensure!(export.cipher_suite == "TLS_PSK_WITH_AES_128_CCM_8", "suite {}", export.cipher_suite);
    ensure!(export.read_state.key == crypto::kdf(&curve.coordinate_bytes(x)), "read key is not KDF(secret.x)");
    ensure!(&export.read_state.key == s.session_key.as_bytes(), "read key is not the session key");
    ensure!(export.write_state.key == crypto::kdf(&curve.coordinate_bytes(y)), "write key is not KDF(secret.y)");
    ensure!(export.peer_certificate == PeerCertificate::None, "peer certificate present");
    ensure!(export.sequence_number == 0, "sequence number {}", export.sequence_number);
    let server_view = export_dtls(&s, s.shared_secret(), &curve, &mut rng).map_err(|e| e.to_string())?;
    ensure!(server_view.read_state.key == export.read_state.key, "server derives a different read key");
    Ok("suite, read = KDF(x), write = KDF(y), no peer certificate, sequence 0".into())
}

const SIM_ID: ClientId = ClientId(0x51);

fn sim_key() -> LongTermKey {
    LongTermKey::new([0x33; 16])
}

fn sim_net<I: Interceptor>(interceptor: I) -> SimNet<I> {
    let mut ks = Keystore::new();
    ks.insert(SIM_ID, sim_key());
    let endpoint = ServerEndpoint::new(
        Arc::new(ServerSessionTable::new(ks)),
        CurveProfile::toy(),
        HandshakeConfig::default(),
    );
    SimNet::new(SimConfig::default(), endpoint, interceptor)
}

fn sim_run<I: Interceptor>(net: &mut SimNet<I>) -> Result<ClientReport, ClientFailure> {
    let mut session = ClientSession::new(SIM_ID, sim_key(), CurveProfile::toy());
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let out = run_client_handshake(
        net,
        &mut session,
        &HandshakeConfig::default(),
        &RetransmitPolicy::default(),
        &mut rng,
    );
    net.run_until_idle();
    out
}

/// Delivers the first Msg1 twice, the copy after the server has answered,
/// and keeps every server datagram.
#[derive(Default)]
struct LateCopy(Vec<Vec<u8>>);

impl Interceptor for LateCopy {
    fn on_datagram(&mut self, dir: Direction, ordinal: usize, bytes: &[u8], _: Duration) -> Vec<(Duration, Vec<u8>)> {
        if dir == Direction::ServerToClient {
            self.0.push(bytes.to_vec());
        }
        let mut out = vec![(Duration::ZERO, bytes.to_vec())];
        if dir == Direction::ClientToServer && ordinal == 0 {
            out.push((Duration::from_millis(15), bytes.to_vec()));
        }
        out
    }
}

fn transport_semantics() -> Verdict {
    let mut net = sim_net(LinkSchedule::new().drop(Direction::ClientToServer, 0));
    let report = sim_run(&mut net).map_err(|e| format!("lossy link: {e}"))?;
    ensure!(report.retransmissions >= 1, "first CON dropped but nothing retransmitted");
    ensure!(net.established().len() == 1, "lossy link: {} sessions", net.established().len());

    let mut net = sim_net(LateCopy::default());
    sim_run(&mut net).map_err(|e| format!("duplicated msg1: {e}"))?;
    let cached: Vec<bool> = net
        .server_events()
        .iter()
        .filter_map(|(_, _, e)| match e {
            ServerEvent::Replied { retransmission, .. } => Some(*retransmission),
            _ => None,
        })
        .collect();
    ensure!(cached == [false, true], "server replies {cached:?}");
    let replies = &net.interceptor().0;
    ensure!(replies.len() >= 2 && replies[0] == replies[1], "cached Msg2 differs from the original");
    ensure!(net.established().len() == 1, "duplicated msg1: {} sessions", net.established().len());

    let mut net = sim_net(LinkSchedule::new().duplicate(Direction::ClientToServer, 1));
    sim_run(&mut net).map_err(|e| format!("duplicated msg3: {e}"))?;
    ensure!(net.established().len() == 1, "duplicated msg3: {} sessions", net.established().len());

    Ok("lost CON retransmitted, duplicate Msg1 answered with identical cached Msg2, duplicate Msg3 ignored".into())
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("honest key agreement", key_agreement),
        ("three messages", message_count),
        ("nominal sizes", sizes),
        ("operation counts", op_counts),
        ("attack scenarios", scenarios),
        ("mutation sweep", sweep),
        ("toy oracle", toy_oracle),
        ("ed448 smoke timing", ed448_smoke),
        ("dtls export", dtls_export),
        ("transport semantics", transport_semantics),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
