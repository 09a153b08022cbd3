use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::protocol::{MessageType, TerminateReason, message_layout};
use crate::transport::ServerEvent;

use super::{Action, AttackScript, Expected, HandshakeOutcome, World, execute, field_span};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepReport {
    pub profile: String,
    pub seed: u64,
    pub trials: usize,
    /// The identity mutation (mask 0) still completed on both sides.
    pub control_completed: bool,
    /// Trials per rejection, keyed `server:<reason>` or `client:<reason>`.
    /// A trial rejected on both sides counts under both.
    pub histogram: BTreeMap<String, usize>,
    /// Trials that ended without any named rejection.
    pub unclassified: usize,
    /// Server sessions established by mutated runs.
    pub established: usize,
    pub pass: bool,
}

impl SweepReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "mutation sweep [{}, seed {}]: {} trials, {}\n",
            self.profile,
            self.seed,
            self.trials,
            if self.pass { "PASS" } else { "FAIL" }
        );
        out += &format!("  control completed: {}\n", self.control_completed);
        for (reason, n) in &self.histogram {
            out += &format!("  {reason:<40} {n}\n");
        }
        out += &format!("  unclassified: {}\n  established: {}\n", self.unclassified, self.established);
        out
    }
}

pub(crate) fn reason_key(reason: &TerminateReason) -> String {
    match reason {
        TerminateReason::InvalidPoint(p) => {
            let p = serde_json::to_value(p).expect("plain enum");
            format!("invalid-point/{}", p.as_str().unwrap_or_default())
        }
        other => serde_json::to_value(other)
            .expect("plain enum")
            .as_str()
            .unwrap_or_default()
            .to_string(),
    }
}

/// Every field of every message.
pub fn all_targets(world: &World) -> Vec<(MessageType, &'static str)> {
    let curve = &world.curve;
    MessageType::ALL
        .iter()
        .flat_map(|&kind| {
            message_layout(kind, curve.point_len(), curve.nominal_point_bits() as usize)
                .into_iter()
                .map(move |f| (kind, f.name))
        })
        .collect()
}

fn tamper_script(message: MessageType, field: &str, offset: usize, mask: u8) -> AttackScript {
    AttackScript {
        name: "mutation".into(),
        description: String::new(),
        insider: false,
        rotate: false,
        profiles: Vec::new(),
        actions: vec![
            Action::Handshake {
                at: 0.0,
                leak_ephemeral: false,
            },
            Action::Tamper {
                message,
                occurrence: Some(0),
                field: Some(field.to_string()),
                offset,
                mask,
            },
        ],
        expect: vec![Expected::NoSecondSession],
    }
}

/// [`mutation_sweep_targets`] over every field of every message.
pub fn mutation_sweep(world: &World, trials: usize, seed: u64) -> SweepReport {
    let targets = all_targets(world);
    mutation_sweep_targets(world, trials, seed, &targets)
}

/// Runs `trials` honest handshakes, each with one random nonzero XOR mask
/// applied to one random byte of one field drawn from `targets`, every trial
/// in a fresh world. Passes when no mutated run establishes a server session,
/// every trial ends in a named rejection, and the mask-0 control completes.
pub fn mutation_sweep_targets(
    world: &World,
    trials: usize,
    seed: u64,
    targets: &[(MessageType, &str)],
) -> SweepReport {
    assert!(trials >= 1, "a sweep needs at least one trial");
    assert!(!targets.is_empty(), "a sweep needs at least one target");
    let curve = &*world.curve;

    let control = execute(&tamper_script(targets[0].0, targets[0].1, 0, 0), world)
        .expect("control script is valid for every profile");
    let control_completed = matches!(
        control.handshakes.first().map(|h| &h.outcome),
        Some(HandshakeOutcome::Established { .. })
    ) && control.established().len() == 1;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut histogram = BTreeMap::new();
    let mut unclassified = 0;
    let mut established = 0;
    for _ in 0..trials {
        let (message, field) = targets[rng.random_range(0..targets.len())];
        let (_, len) = field_span(message, field, curve).expect("targets name real fields");
        let offset = rng.random_range(0..len);
        let mask = rng.random_range(1..=u8::MAX);
        let mut trial = world.clone();
        trial.seed = rng.next_u64();
        trial.sim.server_seed = trial.seed;

        let exec = execute(&tamper_script(message, field, offset, mask), &trial).expect("tamper offsets are in range");
        established += exec.established().len();
        let mut labels = BTreeSet::new();
        for (_, _, e) in exec.net.server_events() {
            if let ServerEvent::Terminated(r) = e {
                labels.insert(format!("server:{}", reason_key(r)));
            }
        }
        for h in &exec.handshakes {
            if let HandshakeOutcome::Terminated { reason } = &h.outcome {
                labels.insert(format!("client:{}", reason_key(reason)));
            }
        }
        if labels.is_empty() {
            unclassified += 1;
        }
        for label in labels {
            *histogram.entry(label).or_insert(0) += 1;
        }
    }
    SweepReport {
        profile: world.profile().to_string(),
        seed,
        trials,
        control_completed,
        pass: control_completed && established == 0 && unclassified == 0,
        histogram,
        unclassified,
        established,
    }
}
