use num_traits::One;

use crate::curve::PointRejection;
use crate::protocol::TerminateReason;
use crate::transport::ServerEvent;
use crate::transport::sim::EventSummary;

use super::{Action, AttackReport, AttackScript, Check, Expected, KeyChoice, PointChoice, World, event_label, execute};

struct Probe {
    name: &'static str,
    point: PointChoice,
    /// Expected rejection and the scalar multiplications the server may spend
    /// reaching it.
    reject: Option<(PointRejection, u64)>,
}

/// Sends first messages sealed under the victim's key (the insider variant)
/// whose client point is off the curve, the identity, or of small order on
/// curves with a cofactor, plus a valid control. Each probe runs in its own
/// world. An invalid point must be refused before any multiplication that
/// involves it; the subgroup test is the only one allowed.
pub fn invalid_curve_probe(world: &World) -> AttackReport {
    let mut probes = vec![
        Probe {
            name: "off-curve",
            point: PointChoice::OffCurve,
            reject: Some((PointRejection::OffCurve, 0)),
        },
        Probe {
            name: "infinity",
            point: PointChoice::Infinity,
            reject: Some((PointRejection::InfinityPoint, 0)),
        },
    ];
    if !world.curve.cofactor().is_one() {
        probes.push(Probe {
            name: "small-subgroup",
            point: PointChoice::SmallSubgroup,
            reject: Some((PointRejection::SmallSubgroup, 1)),
        });
    }
    probes.push(Probe {
        name: "valid-control",
        point: PointChoice::Valid,
        reject: None,
    });

    let mut report = AttackReport {
        script: "invalid-curve-probe".into(),
        profile: world.profile().to_string(),
        seed: world.seed,
        handshakes: Vec::new(),
        server_events: Vec::new(),
        checks: Vec::new(),
        attacker_success: false,
        transcript: Vec::new(),
        pass: false,
    };
    for probe in probes {
        let expect = match probe.reject {
            Some((rejection, _)) => vec![Expected::ServerRejects {
                reason: TerminateReason::InvalidPoint(rejection),
                count: Some(1),
            }],
            None => vec![Expected::NoSecondSession],
        };
        let script = AttackScript {
            name: format!("invalid-curve-probe/{}", probe.name),
            description: String::new(),
            insider: true,
            rotate: false,
            profiles: Vec::new(),
            actions: vec![Action::ForgeMsg1 {
                at: 0.0,
                source: None,
                key: KeyChoice::Known,
                point: probe.point,
            }],
            expect: expect.clone(),
        };
        let exec = execute(&script, world).expect("probe scripts fit every profile they are built for");
        let sub = exec.report(&script.name, &expect, world);

        let ecpm = exec.link_ops.ecpm;
        let event = exec.net.server_events().first().map(|(_, _, e)| e);
        let label = event.map_or("nothing".to_string(), |e| event_label(&EventSummary::from(e)));
        let (expected, pass) = match probe.reject {
            Some((rejection, budget)) => (
                format!("{} point refused ({rejection}) after {budget} scalar multiplications", probe.name),
                matches!(event, Some(ServerEvent::Terminated(TerminateReason::InvalidPoint(r))) if *r == rejection)
                    && ecpm == budget,
            ),
            None => (
                "valid point answered".to_string(),
                matches!(event, Some(ServerEvent::Replied { .. })),
            ),
        };
        report.checks.extend(sub.checks);
        report.checks.push(Check {
            expected,
            observed: format!("{label}, {ecpm} scalar multiplications"),
            pass,
        });
        report.attacker_success |= sub.attacker_success;
        report.server_events.extend(sub.server_events);
        report.transcript.extend(sub.transcript);
    }
    report.pass = report.checks.iter().all(|c| c.pass) && !report.attacker_success;
    report
}
