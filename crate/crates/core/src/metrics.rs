//! Per-thread primitive-operation counters.
//!
//! The curve and symmetric-crypto layers bump these on every call so a driver
//! can measure exactly what one handshake costs. Counters are thread-local:
//! a single-threaded measurement sees the sum over both parties, and
//! concurrent server workers never contend on them.

use serde::Serialize;
use std::cell::Cell;

/// Primitive operation counts accumulated since the last [`reset`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    /// Scalar point multiplications, including subgroup-membership checks.
    pub ecpm: u64,
    /// Affine point additions performed by the protocol (not ladder-internal).
    pub ecpa: u64,
    pub aead_seals: u64,
    pub aead_opens: u64,
    /// Hashes invoked directly by the protocol (client-ID digests).
    pub hash_direct: u64,
    /// Hash-function invocations inside the KDF's HMAC computations.
    pub hash_kdf: u64,
    pub kdf_calls: u64,
}

impl OpCounters {
    pub fn aead_ops(&self) -> u64 {
        self.aead_seals + self.aead_opens
    }

    pub fn hash_ops(&self) -> u64 {
        self.hash_direct + self.hash_kdf
    }
}

impl std::ops::AddAssign for OpCounters {
    fn add_assign(&mut self, o: OpCounters) {
        self.ecpm += o.ecpm;
        self.ecpa += o.ecpa;
        self.aead_seals += o.aead_seals;
        self.aead_opens += o.aead_opens;
        self.hash_direct += o.hash_direct;
        self.hash_kdf += o.hash_kdf;
        self.kdf_calls += o.kdf_calls;
    }
}

thread_local! {
    static COUNTERS: Cell<OpCounters> = Cell::new(OpCounters::default());
}

pub fn snapshot() -> OpCounters {
    COUNTERS.with(Cell::get)
}

pub fn reset() {
    COUNTERS.with(|c| c.set(OpCounters::default()));
}

/// Runs `f` and returns its result along with the counters it accumulated.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, OpCounters) {
    let before = snapshot();
    let out = f();
    let after = snapshot();
    let delta = OpCounters {
        ecpm: after.ecpm - before.ecpm,
        ecpa: after.ecpa - before.ecpa,
        aead_seals: after.aead_seals - before.aead_seals,
        aead_opens: after.aead_opens - before.aead_opens,
        hash_direct: after.hash_direct - before.hash_direct,
        hash_kdf: after.hash_kdf - before.hash_kdf,
        kdf_calls: after.kdf_calls - before.kdf_calls,
    };
    (out, delta)
}

pub(crate) fn record(update: impl FnOnce(&mut OpCounters)) {
    COUNTERS.with(|c| {
        let mut current = c.get();
        update(&mut current);
        c.set(current);
    });
}
