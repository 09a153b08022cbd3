use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, mpsc};

use lakee_core::adversary::{
    self, Action, AttackReport, AttackScript, Expected, World, builtin, builtin_names,
};
use lakee_core::bench::{measure_handshake, nominal_sizes, report_tables};
use lakee_core::crypto::LongTermKey;
use lakee_core::protocol::{ClientId, ClientSession, HandshakeConfig, Keystore, ServerSessionTable};
use lakee_core::transport::sim::{Direction, LinkRecord};
use lakee_core::transport::udp::{EventSink, UdpChannel, spawn_server};
use lakee_core::transport::{RetransmitPolicy, ServerEndpoint, ServerEvent, run_client_handshake};
use rand::SeedableRng;
use rand::rngs::StdRng;

use crate::CliError;
use crate::config::Settings;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn parse_client_id(text: &str) -> Result<ClientId, CliError> {
    let digits = text.strip_prefix("0x").unwrap_or(text);
    u64::from_str_radix(digits, 16)
        .map(ClientId)
        .map_err(|_| CliError::Usage(format!("client id `{text}` is not hex")))
}

fn handshake_config(s: &Settings) -> HandshakeConfig {
    let cfg = HandshakeConfig {
        delta_t: s.delta_t,
        ..HandshakeConfig::default()
    };
    if s.rotate { cfg.always_rotate() } else { cfg }
}

fn rng(seed: Option<u64>) -> StdRng {
    match seed {
        Some(seed) => StdRng::seed_from_u64(seed),
        None => StdRng::from_os_rng(),
    }
}

fn world(s: &Settings) -> World {
    let mut world = World::new(s.curve.clone(), s.seed.unwrap_or(0));
    world.handshake.delta_t = s.delta_t;
    world
}

fn describe(event: &ServerEvent) -> String {
    match event {
        ServerEvent::Replied { client, retransmission } => {
            let cached = if *retransmission { " (cached)" } else { "" };
            format!("replied to client {client}{cached}")
        }
        ServerEvent::Established(r) => {
            let rotated = if r.rotated_key.is_some() { ", key rotated" } else { "" };
            format!("session established with client {}{rotated}", r.peer)
        }
        ServerEvent::Terminated(reason) => format!("terminated: {reason}"),
        ServerEvent::Dropped => "dropped (rate limited)".into(),
        ServerEvent::Ignored => "ignored".into(),
    }
}

pub fn serve(s: &Settings, workers: usize, max_sessions: Option<usize>) -> Result<(), CliError> {
    let path = s.keystore_path()?.to_path_buf();
    let keystore = Keystore::load(&path).map_err(usage)?;
    let clients = keystore.len();
    let table = Arc::new(ServerSessionTable::new(keystore));
    let endpoint = Arc::new(ServerEndpoint::new(table.clone(), s.curve.clone(), handshake_config(s)));

    let (tx, rx) = mpsc::channel::<(String, bool, bool)>();
    let sink: EventSink = Arc::new(move |source: SocketAddr, event: &ServerEvent| {
        let (established, rotated) = match event {
            ServerEvent::Established(r) => (true, r.rotated_key.is_some()),
            _ => (false, false),
        };
        let _ = tx.send((format!("{source}: {}", describe(event)), established, rotated));
    });
    let handle = spawn_server(s.listen, endpoint, workers, s.seed, Some(sink))
        .map_err(|e| CliError::Failed(format!("cannot listen on {}: {e}", s.listen)))?;
    println!(
        "listening on {} ({}, {clients} clients, delta-t {} s)",
        handle.local_addr(),
        s.curve.name(),
        s.delta_t.as_secs()
    );
    let _ = std::io::stdout().flush();

    let mut sessions = 0;
    for (line, established, rotated) in rx {
        println!("{line}");
        let _ = std::io::stdout().flush();
        if rotated {
            table
                .keystore()
                .save_atomic(&path)
                .map_err(|e| CliError::Failed(format!("cannot save rotated keys: {e}")))?;
        }
        if established {
            sessions += 1;
            if max_sessions.is_some_and(|max| sessions >= max) {
                break;
            }
        }
    }
    handle.shutdown();
    Ok(())
}

pub fn handshake_udp(s: &Settings, server: SocketAddr, client_id: Option<&str>) -> Result<(), CliError> {
    let id = parse_client_id(client_id.ok_or_else(|| usage("--client-id is required with --server"))?)?;
    let path = s.keystore_path()?;
    let mut keystore = Keystore::load(path).map_err(usage)?;
    let key = keystore
        .get(id)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("client {id} is not in {}", path.display())))?;
    let mut channel = UdpChannel::connect(server).map_err(|e| CliError::Failed(format!("connect {server}: {e}")))?;
    let mut session = ClientSession::new(id, key, s.curve.clone());
    let report = run_client_handshake(
        &mut channel,
        &mut session,
        &handshake_config(s),
        &RetransmitPolicy::default(),
        &mut rng(s.seed),
    )
    .map_err(|e| CliError::Failed(format!("handshake failed: {e}")))?;
    println!(
        "session established with {server}: {} messages, {} bytes, {} retransmissions, {:.1} ms",
        report.handshake_messages,
        report.wire_bytes,
        report.retransmissions,
        report.elapsed.as_secs_f64() * 1e3
    );
    if let Some(next) = report.result.rotated_key {
        keystore.insert(id, next);
        keystore
            .save_atomic(path)
            .map_err(|e| CliError::Failed(format!("cannot save rotated key: {e}")))?;
        println!("long-term key rotated; {} updated", path.display());
    }
    Ok(())
}

fn kind_label(kind: &Option<lakee_core::protocol::MessageType>) -> String {
    kind.map_or("-".to_string(), |k| format!("{k:?}").to_lowercase())
}

fn direction_label(d: Direction) -> &'static str {
    match d {
        Direction::ClientToServer => "client->server",
        Direction::ServerToClient => "server->client",
    }
}

fn render_transcript(records: &[LinkRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = match r {
            LinkRecord::Sent {
                at_ms,
                direction,
                kind,
                len,
                copies,
                ..
            } => {
                let lost = if *copies == 0 { " (lost)" } else { "" };
                format!(
                    "{at_ms:>7} ms  sent       {} {} {len} B{lost}",
                    direction_label(*direction),
                    kind_label(kind)
                )
            }
            LinkRecord::Injected {
                at_ms,
                direction,
                source,
                kind,
                len,
            } => format!(
                "{at_ms:>7} ms  injected   {} {} {len} B from {source}",
                direction_label(*direction),
                kind_label(kind)
            ),
            LinkRecord::Delivered {
                at_ms,
                direction,
                kind,
                len,
                server,
                ..
            } => {
                let event = server
                    .as_ref()
                    .map(|e| format!(" -> {}", serde_label(e)))
                    .unwrap_or_default();
                format!(
                    "{at_ms:>7} ms  delivered  {} {} {len} B{event}",
                    direction_label(*direction),
                    kind_label(kind)
                )
            }
        };
        out += &line;
        out.push('\n');
    }
    out
}

fn serde_label(e: &lakee_core::transport::sim::EventSummary) -> String {
    use lakee_core::transport::sim::EventSummary;
    match e {
        EventSummary::Replied { retransmission: false } => "replied".into(),
        EventSummary::Replied { retransmission: true } => "replied (cached)".into(),
        EventSummary::Established { .. } => "established".into(),
        EventSummary::Terminated(r) => format!("terminated: {r}"),
        EventSummary::Dropped => "dropped".into(),
        EventSummary::Ignored => "ignored".into(),
    }
}

pub fn handshake_sim(s: &Settings, json: bool) -> Result<(), CliError> {
    let world = world(s);
    let script = AttackScript {
        name: "handshake".into(),
        description: String::new(),
        insider: false,
        rotate: s.rotate,
        profiles: Vec::new(),
        actions: vec![Action::Handshake {
            at: 0.0,
            leak_ephemeral: false,
        }],
        expect: vec![Expected::Completes { handshake: Some(0) }],
    };
    let report = adversary::run_attack(&script, &world).map_err(usage)?;
    if json {
        println!("{}", report.to_json());
    } else {
        println!("in-process handshake, profile {}, seed {}", report.profile, report.seed);
        print!("{}", render_transcript(&report.transcript));
    }
    let outcome = &report.handshakes[0].outcome;
    if !report.pass {
        return Err(CliError::Failed(format!("handshake failed: {outcome}")));
    }
    if !json {
        println!("result: {outcome}, both sides hold the same session key");
    }
    Ok(())
}

fn resolve_scripts(name: &str, profile: &str) -> Result<Vec<AttackScript>, CliError> {
    if name == "all" {
        return Ok(adversary::builtins(profile));
    }
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(usage)?;
        return AttackScript::from_toml(&text).map(|s| vec![s]).map_err(usage);
    }
    if let Some(script) = builtin_names().find(|n| *n == name).and_then(builtin) {
        return Ok(vec![script]);
    }
    let group: Vec<AttackScript> = builtin_names()
        .filter(|n| n.starts_with(name))
        .filter_map(builtin)
        .filter(|s| s.applies_to(profile))
        .collect();
    if group.is_empty() {
        return Err(CliError::Usage(format!(
            "no built-in script or file named `{name}`; see `lakee attack --list`"
        )));
    }
    Ok(group)
}

pub fn attack(
    s: &Settings,
    script: Option<&str>,
    list: bool,
    probe: bool,
    sweep: Option<usize>,
    json: bool,
) -> Result<(), CliError> {
    if list {
        for name in builtin_names() {
            let script = builtin(name).expect("listed scripts exist");
            println!("{name:<32} {}", script.description);
        }
        return Ok(());
    }
    let world = world(s);
    let mut failed = Vec::new();
    let mut reports: Vec<AttackReport> = Vec::new();
    if probe {
        reports.push(adversary::invalid_curve_probe(&world));
    }
    if let Some(name) = script {
        for script in resolve_scripts(name, world.profile())? {
            reports.push(adversary::run_attack(&script, &world).map_err(usage)?);
        }
    }
    for r in &reports {
        if !r.pass {
            failed.push(r.script.clone());
        }
    }
    if json && !reports.is_empty() {
        let items: Vec<String> = reports.iter().map(|r| r.to_json()).collect();
        println!("[{}]", items.join(",\n"));
    } else {
        for r in &reports {
            print!("{}", r.render_text());
        }
    }
    if let Some(trials) = sweep {
        if trials == 0 {
            return Err(usage("--sweep needs at least one trial"));
        }
        let report = adversary::mutation_sweep(&world, trials, s.seed.unwrap_or(0));
        print!("{}", report.render_text());
        if !report.pass {
            failed.push("mutation sweep".into());
        }
    } else if reports.is_empty() {
        return Err(usage("nothing to do: give --script, --probe, --sweep or --list"));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("attack checks failed: {}", failed.join(", "))))
    }
}

pub fn bench(s: &Settings, json: bool, timing: bool) -> Result<(), CliError> {
    let seed = s.seed.unwrap_or(0);
    let m = measure_handshake(s.curve.clone(), s.rotate, seed).map_err(|e| CliError::Failed(e.to_string()))?;
    let bits = s.point_bits.unwrap_or(s.curve.nominal_point_bits() as usize);
    let tables = report_tables(&m, nominal_sizes(bits).map_err(usage)?);
    if json {
        println!("{}", tables.to_json());
    } else {
        print!("{}", tables.render_text());
    }
    if timing {
        println!("wall time {:.3} ms (hardware dependent)", m.wall.as_secs_f64() * 1e3);
    }
    if !m.keys_match {
        return Err(CliError::Failed("client and server keys differ".into()));
    }
    Ok(())
}

pub fn sizes(s: &Settings, json: bool) -> Result<(), CliError> {
    let bits = s.point_bits.unwrap_or(s.curve.nominal_point_bits() as usize);
    let model = nominal_sizes(bits).map_err(|e| CliError::Usage(format!("--point-bits: {e}")))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&model).expect("size model serializes"));
    } else {
        print!("{}", model.render_text());
    }
    Ok(())
}

pub fn keygen(s: &Settings, client_id: &str) -> Result<(), CliError> {
    let id = parse_client_id(client_id)?;
    let path = s.keystore_path()?;
    let mut keystore = if path.exists() {
        Keystore::load(path).map_err(usage)?
    } else {
        Keystore::new()
    };
    if keystore.get(id).is_some() {
        return Err(CliError::Usage(format!("client {id} already has a key in {}", path.display())));
    }
    keystore.insert(id, LongTermKey::random(&mut rng(s.seed)));
    keystore
        .save_atomic(path)
        .map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))?;
    println!("added client {id} to {}", path.display());
    Ok(())
}
