//! Attack scripts shipped with the crate. Their sources live in `scripts/`
//! and double as examples of the script format.

use super::{AttackScript, ScriptError};

const SOURCES: &[(&str, &str)] = &[
    ("control", include_str!("../../scripts/control.toml")),
    ("control-rotating", include_str!("../../scripts/control-rotating.toml")),
    ("mitm-tamper-msg1", include_str!("../../scripts/mitm-tamper-msg1.toml")),
    ("mitm-tamper-msg2", include_str!("../../scripts/mitm-tamper-msg2.toml")),
    ("mitm-tamper-msg3", include_str!("../../scripts/mitm-tamper-msg3.toml")),
    ("mitm-tamper-tag", include_str!("../../scripts/mitm-tamper-tag.toml")),
    ("replay-msg1-after-delta-t", include_str!("../../scripts/replay-msg1-after-delta-t.toml")),
    ("replay-msg1-within-delta-t", include_str!("../../scripts/replay-msg1-within-delta-t.toml")),
    ("replay-msg3", include_str!("../../scripts/replay-msg3.toml")),
    ("replay-old-msg2", include_str!("../../scripts/replay-old-msg2.toml")),
    ("duplicate-msg3", include_str!("../../scripts/duplicate-msg3.toml")),
    ("delay-msg2-past-delta-t", include_str!("../../scripts/delay-msg2-past-delta-t.toml")),
    ("dos-junk-then-unblock", include_str!("../../scripts/dos-junk-then-unblock.toml")),
    ("impersonate-client", include_str!("../../scripts/impersonate-client.toml")),
    ("impersonate-server", include_str!("../../scripts/impersonate-server.toml")),
    ("known-session-temporary", include_str!("../../scripts/known-session-temporary.toml")),
    ("invalid-curve-off-curve", include_str!("../../scripts/invalid-curve-off-curve.toml")),
    ("invalid-curve-infinity", include_str!("../../scripts/invalid-curve-infinity.toml")),
    ("invalid-curve-small-subgroup", include_str!("../../scripts/invalid-curve-small-subgroup.toml")),
    ("cross-branch-msg2", include_str!("../../scripts/cross-branch-msg2.toml")),
    ("cross-branch-msg2-rotating", include_str!("../../scripts/cross-branch-msg2-rotating.toml")),
    ("cross-branch-msg3", include_str!("../../scripts/cross-branch-msg3.toml")),
    ("cross-branch-msg3-rotating", include_str!("../../scripts/cross-branch-msg3-rotating.toml")),
];

/// Names of all built-in scripts, in suite order.
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(name, _)| *name)
}

/// The built-in script called `name`, or the only one starting with `name`.
pub fn builtin(name: &str) -> Option<AttackScript> {
    let exact = SOURCES.iter().find(|(n, _)| *n == name);
    let found = exact.or_else(|| {
        let mut hits = SOURCES.iter().filter(|(n, _)| n.starts_with(name));
        match (hits.next(), hits.next()) {
            (Some(hit), None) => Some(hit),
            _ => None,
        }
    })?;
    Some(parse(found.1))
}

/// Every built-in script that applies to `profile`.
pub fn builtins(profile: &str) -> Vec<AttackScript> {
    SOURCES
        .iter()
        .map(|(_, text)| parse(text))
        .filter(|s| s.applies_to(profile))
        .collect()
}

fn parse(text: &str) -> AttackScript {
    AttackScript::from_toml(text)
        .map_err(|e: ScriptError| e.to_string())
        .expect("built-in scripts parse")
}
