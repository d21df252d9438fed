//! Operation-level energy accounting.
//!
//! Costs follow a 45 nm, 32-bit float model: 3.7 pJ per multiplication (MUL)
//! and 0.9 pJ per accumulation (AC).

pub mod ledger;
mod profile;

pub use ledger::{measure, with_tag, EnergyLedger, OpCounts};
pub use profile::{profile_attention, profile_attention_on, PAPER_SHAPE};

use serde::{Deserialize, Serialize};

use crate::attention::AttentionVariant;

pub const MUL_JOULES: f64 = 3.7e-12;
pub const AC_JOULES: f64 = 0.9e-12;

pub fn energy_of(mul: u64, ac: u64) -> f64 {
    MUL_JOULES * mul as f64 + AC_JOULES * ac as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TagEnergy {
    pub tag: String,
    pub baseline_joules: f64,
    pub candidate_joules: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub baseline_joules: f64,
    pub candidate_joules: f64,
    /// `candidate / baseline`; `None` when the baseline costs nothing but the
    /// candidate does.
    pub ratio: Option<f64>,
    pub per_tag: Vec<TagEnergy>,
}

/// Compares `candidate` against `baseline`.
pub fn compare(baseline: &EnergyLedger, candidate: &EnergyLedger) -> Comparison {
    let (ea, eb) = (baseline.energy_joules(), candidate.energy_joules());
    let ratio = match (ea == 0.0, eb == 0.0) {
        (true, true) => Some(1.0),
        (true, false) => None,
        _ => Some(eb / ea),
    };
    let mut tags: Vec<&str> = baseline.tags().chain(candidate.tags()).map(|(t, _)| t).collect();
    tags.sort_unstable();
    tags.dedup();
    let per_tag = tags
        .into_iter()
        .map(|tag| TagEnergy {
            tag: tag.to_string(),
            baseline_joules: baseline.tag(tag).energy_joules(),
            candidate_joules: candidate.tag(tag).energy_joules(),
        })
        .collect();
    Comparison {
        baseline_joules: ea,
        candidate_joules: eb,
        ratio,
        per_tag,
    }
}

/// One row of the energy report, serialized as JSON or CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub variant: AttentionVariant,
    pub shape: [usize; 4],
    pub mul: u64,
    pub ac: u64,
    pub energy_joules: f64,
    pub ratio_vs_baseline: Option<f64>,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "variant,shape,mul,ac,energy_joules,ratio_vs_baseline";

    pub fn new(variant: AttentionVariant, shape: [usize; 4], counts: OpCounts) -> Self {
        Self {
            variant,
            shape,
            mul: counts.mul,
            ac: counts.ac,
            energy_joules: counts.energy_joules(),
            ratio_vs_baseline: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `shape` is written as `TxCxHxW`; a missing ratio is an empty field.
    pub fn csv_row(&self) -> String {
        let [t, c, h, w] = self.shape;
        let ratio = self
            .ratio_vs_baseline
            .map(|r| format!("{r}"))
            .unwrap_or_default();
        format!(
            "{},{t}x{c}x{h}x{w},{},{},{:e},{ratio}",
            self.variant, self.mul, self.ac, self.energy_joules
        )
    }
}
