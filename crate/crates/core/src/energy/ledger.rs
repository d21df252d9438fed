//! Operation counters.
//!
//! Kernels report their multiplications and accumulations to the ledger that
//! is currently being recorded on this thread (see [`measure`]). Outside of a
//! measurement the counts are discarded. Nested measurements are allowed: when
//! an inner measurement finishes, its counts are folded into the enclosing one.

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const DEFAULT_TAG: &str = "untagged";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub mul: u64,
    pub ac: u64,
}

impl OpCounts {
    pub fn new(mul: u64, ac: u64) -> Self {
        Self { mul, ac }
    }

    pub fn energy_joules(&self) -> f64 {
        super::energy_of(self.mul, self.ac)
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            mul: self.mul + rhs.mul,
            ac: self.ac + rhs.ac,
        }
    }
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: OpCounts) {
        self.mul += rhs.mul;
        self.ac += rhs.ac;
    }
}

/// MUL and AC counts keyed by module tag.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyLedger {
    tags: BTreeMap<String, OpCounts>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, tag: &str, counts: OpCounts) {
        *self.tags.entry(tag.to_string()).or_default() += counts;
    }

    pub fn merge(&mut self, other: &EnergyLedger) {
        for (tag, counts) in &other.tags {
            self.record(tag, *counts);
        }
    }

    pub fn tag(&self, tag: &str) -> OpCounts {
        self.tags.get(tag).copied().unwrap_or_default()
    }

    pub fn tags(&self) -> impl Iterator<Item = (&str, OpCounts)> {
        self.tags.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn total(&self) -> OpCounts {
        self.tags.values().fold(OpCounts::default(), |acc, c| acc + *c)
    }

    pub fn mul_count(&self) -> u64 {
        self.total().mul
    }

    pub fn ac_count(&self) -> u64 {
        self.total().ac
    }

    pub fn energy_joules(&self) -> f64 {
        self.total().energy_joules()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == OpCounts::default()
    }
}

struct Recorder {
    frames: Vec<EnergyLedger>,
    tags: Vec<String>,
}

thread_local! {
    static RECORDER: RefCell<Recorder> = const {
        RefCell::new(Recorder { frames: Vec::new(), tags: Vec::new() })
    };
}

fn add(counts: OpCounts) {
    if counts == OpCounts::default() {
        return;
    }
    RECORDER.with(|r| {
        let mut r = r.borrow_mut();
        let tag = r
            .tags
            .last()
            .cloned()
            .unwrap_or_else(|| DEFAULT_TAG.to_string());
        if let Some(frame) = r.frames.last_mut() {
            frame.record(&tag, counts);
        }
    });
}

pub(crate) fn count_mul(n: u64) {
    add(OpCounts::new(n, 0));
}

pub(crate) fn count_ac(n: u64) {
    add(OpCounts::new(0, n));
}

pub(crate) fn count(mul: u64, ac: u64) {
    add(OpCounts::new(mul, ac));
}

struct FrameGuard;

impl Drop for FrameGuard {
    fn drop(&mut self) {
        // Only reached on unwind; the normal path pops explicitly.
        RECORDER.with(|r| {
            r.borrow_mut().frames.pop();
        });
    }
}

/// Runs `f` and returns the operations it performed on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, EnergyLedger) {
    RECORDER.with(|r| r.borrow_mut().frames.push(EnergyLedger::new()));
    let guard = FrameGuard;
    let out = f();
    std::mem::forget(guard);
    let ledger = RECORDER.with(|r| {
        let mut r = r.borrow_mut();
        let ledger = r.frames.pop().unwrap_or_default();
        if let Some(parent) = r.frames.last_mut() {
            parent.merge(&ledger);
        }
        ledger
    });
    (out, ledger)
}

struct TagGuard;

impl Drop for TagGuard {
    fn drop(&mut self) {
        RECORDER.with(|r| {
            r.borrow_mut().tags.pop();
        });
    }
}

/// Attributes every operation performed inside `f` to `tag`.
pub fn with_tag<R>(tag: &str, f: impl FnOnce() -> R) -> R {
    RECORDER.with(|r| r.borrow_mut().tags.push(tag.to_string()));
    let _guard = TagGuard;
    f()
}
