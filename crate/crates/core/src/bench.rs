//! Message-size model, instrumented handshake measurement and the comparison
//! tables built from them.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::LongTermKey;
use crate::curve::CurveProfile;
use crate::metrics::{self, OpCounters};
use crate::protocol::{
    ClientId, ClientSession, HandshakeConfig, Keystore, MessageType, ServerSessionTable, message_layout,
};
use crate::transport::sim::{PassThrough, SimConfig, SimNet};
use crate::transport::{ClientFailure, RetransmitPolicy, ServerEndpoint, run_client_handshake};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MessageSize {
    pub message: MessageType,
    /// Field name and nominal width in bits, in wire order.
    pub fields: Vec<(&'static str, usize)>,
    pub total_bits: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SizeModel {
    pub point_bits: usize,
    pub messages: Vec<MessageSize>,
    pub total_bits: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SizeError {
    #[error("point width must be positive")]
    ZeroPointBits,
}

/// Nominal message sizes: client id, digest, points, timestamps and tags,
/// leaving out version, type and nonce.
pub fn nominal_sizes(point_bits: usize) -> Result<SizeModel, SizeError> {
    if point_bits == 0 {
        return Err(SizeError::ZeroPointBits);
    }
    let messages: Vec<MessageSize> = MessageType::ALL
        .iter()
        .map(|&message| {
            let fields: Vec<_> = message_layout(message, 0, point_bits)
                .into_iter()
                .filter_map(|f| f.nominal_bits.map(|bits| (f.name, bits)))
                .collect();
            MessageSize {
                message,
                total_bits: fields.iter().map(|(_, b)| b).sum(),
                fields,
            }
        })
        .collect();
    Ok(SizeModel {
        point_bits,
        total_bits: messages.iter().map(|m| m.total_bits).sum(),
        messages,
    })
}

impl SizeModel {
    pub fn totals(&self) -> Vec<usize> {
        self.messages.iter().map(|m| m.total_bits).collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("nominal message sizes, {}-bit points\n", self.point_bits);
        for m in &self.messages {
            let parts: Vec<String> = m.fields.iter().map(|(_, b)| b.to_string()).collect();
            let names: Vec<&str> = m.fields.iter().map(|(n, _)| *n).collect();
            let _ = writeln!(
                out,
                "  {:<5} {} = {} bits  ({})",
                format!("{:?}", m.message).to_lowercase(),
                parts.join(" + "),
                m.total_bits,
                names.join(", ")
            );
        }
        let _ = writeln!(out, "  total {} bits", self.total_bits);
        out
    }
}

/// One honest handshake run over the simulated link with both parties in
/// this thread, so the counters cover client and server together.
#[derive(Clone, Debug, Serialize)]
pub struct Measurement {
    pub profile: String,
    pub rotate: bool,
    pub seed: u64,
    pub ops: OpCounters,
    /// Handshake messages delivered, counted on the link.
    pub messages: usize,
    /// CoAP datagram bytes of the three messages.
    pub wire_bytes: usize,
    pub keys_match: bool,
    /// Hardware-dependent; reported, never compared.
    #[serde(skip)]
    pub wall: Duration,
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("handshake failed: {0}")]
    Handshake(#[from] ClientFailure),
    #[error("server established {0} sessions instead of one")]
    Sessions(usize),
}

pub fn measure_handshake(curve: Arc<CurveProfile>, rotate: bool, seed: u64) -> Result<Measurement, MeasureError> {
    let id = ClientId(0xbe7c_0001);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = LongTermKey::random(&mut rng);
    let mut cfg = HandshakeConfig::default();
    if rotate {
        cfg = cfg.always_rotate();
    }
    let mut keystore = Keystore::new();
    keystore.insert(id, key.clone());
    let endpoint = ServerEndpoint::new(Arc::new(ServerSessionTable::new(keystore)), curve.clone(), cfg.clone());
    let sim = SimConfig {
        server_seed: seed.wrapping_add(1),
        ..SimConfig::default()
    };
    let mut net = SimNet::new(sim, endpoint, PassThrough);
    let mut session = ClientSession::new(id, key, curve.clone());

    let started = Instant::now();
    let (out, ops) = metrics::measure(|| {
        let out = run_client_handshake(&mut net, &mut session, &cfg, &RetransmitPolicy::default(), &mut rng);
        net.run_until_idle();
        out
    });
    let wall = started.elapsed();
    let report = out?;
    let established = net.established();
    if established.len() != 1 {
        return Err(MeasureError::Sessions(established.len()));
    }
    let server = established[0];
    Ok(Measurement {
        profile: curve.name().to_string(),
        rotate,
        seed,
        ops,
        messages: net.delivered_handshake_messages(),
        wire_bytes: report.wire_bytes,
        keys_match: server.session_key == report.result.session_key
            && server.rotated_key == report.result.rotated_key,
        wall,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MessageCountRow {
    pub protocol: &'static str,
    pub messages: usize,
    /// False for rows quoted from published comparisons rather than run here.
    pub measured: bool,
}

/// Message counts of related protocols as published; they are not
/// implemented here.
pub const QUOTED_MESSAGE_COUNTS: [(&str, usize); 4] = [("ECC-CoAP", 4), ("LESS", 4), ("Dey-Hossain", 5), ("DTLS", 6)];

#[derive(Clone, Debug, Serialize)]
pub struct Tables {
    pub message_counts: Vec<MessageCountRow>,
    pub sizes: SizeModel,
    pub ops: OpCounters,
    pub profile: String,
    pub rotate: bool,
    pub seed: u64,
}

/// Builds the comparison tables; the LAKEE message count comes from
/// `measured`, the other rows are constants.
pub fn report_tables(measured: &Measurement, sizes: SizeModel) -> Tables {
    let mut message_counts = vec![MessageCountRow {
        protocol: "LAKEE",
        messages: measured.messages,
        measured: true,
    }];
    message_counts.extend(QUOTED_MESSAGE_COUNTS.iter().map(|&(protocol, messages)| MessageCountRow {
        protocol,
        messages,
        measured: false,
    }));
    Tables {
        message_counts,
        sizes,
        ops: measured.ops,
        profile: measured.profile.clone(),
        rotate: measured.rotate,
        seed: measured.seed,
    }
}

impl Tables {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables always serialize")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::from("messages per handshake\n");
        for row in &self.message_counts {
            let note = if row.measured { "measured" } else { "quoted" };
            let _ = writeln!(out, "  {:<12} {:>2}  ({note})", row.protocol, row.messages);
        }
        let o = &self.ops;
        let _ = writeln!(
            out,
            "\noperations per honest handshake, both parties ({}, rotate {}, seed {})",
            self.profile, self.rotate, self.seed
        );
        let _ = writeln!(out, "  scalar multiplications  {}", o.ecpm);
        let _ = writeln!(out, "  point additions         {}", o.ecpa);
        let _ = writeln!(out, "  AEAD seal / open        {} / {}", o.aead_seals, o.aead_opens);
        let _ = writeln!(out, "  hashes direct / in KDF  {} / {}", o.hash_direct, o.hash_kdf);
        let _ = writeln!(out, "  KDF calls               {}", o.kdf_calls);
        out.push('\n');
        out += &self.sizes.render_text();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(nominal_sizes(224).unwrap().totals(), [608, 608, 384]);
        assert_eq!(nominal_sizes(224).unwrap().total_bits, 1600);
        assert_eq!(nominal_sizes(128).unwrap().totals(), [512, 416, 288]);
        assert_eq!(nominal_sizes(128).unwrap().total_bits, 1216);
        assert_eq!(nominal_sizes(0), Err(SizeError::ZeroPointBits));
        let m = nominal_sizes(224).unwrap();
        let first: Vec<usize> = m.messages[0].fields.iter().map(|f| f.1).collect();
        assert_eq!(first, [64, 160, 224, 32, 128]);
    }

    #[test]
    fn totals_are_field_sums() {
        for bits in [1, 5, 97, 255, 256, 448, 521, 4096] {
            let m = nominal_sizes(bits).unwrap();
            for msg in &m.messages {
                assert_eq!(msg.total_bits, msg.fields.iter().map(|f| f.1).sum::<usize>());
            }
            assert_eq!(m.total_bits, m.totals().iter().sum::<usize>());
            assert_eq!(m.total_bits, 64 + 160 + 4 * bits + 3 * 32 + 3 * 128);
        }
    }

    #[test]
    fn toy_measurement() {
        let m = measure_handshake(CurveProfile::toy(), false, 1).unwrap();
        assert_eq!(m.messages, 3);
        assert!(m.keys_match);
        assert_eq!(m.ops.ecpm, 4);
        assert_eq!(m.ops.ecpa, 4);
        assert_eq!(m.ops.aead_seals, 3);
        let t = report_tables(&m, nominal_sizes(224).unwrap());
        assert_eq!(t.message_counts[0].messages, 3);
        assert_eq!(t.message_counts.last().unwrap().messages, 6);
        let again = report_tables(&measure_handshake(CurveProfile::toy(), false, 1).unwrap(), nominal_sizes(224).unwrap());
        assert_eq!(t.render_text(), again.render_text());
        assert_eq!(t.to_json(), again.to_json());
    }
}
