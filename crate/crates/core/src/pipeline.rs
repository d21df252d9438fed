//! End-to-end runs driven by a [`RunConfig`]: multi-round simulation with
//! gating, and the baseline-versus-enhanced diversity comparison.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{RunConfig, SPIKING_LAYERS};
use crate::diversity::{coverage, pattern_entropy, write_raster, PatternHistogram};
use crate::encoder::{accumulate_events, load_events};
use crate::energy::{measure, EnergyLedger, OpCounts};
use crate::error::{Error, Result};
use crate::gating::{baseline_forward, layer_histograms, tde_forward, Pathway, TdeBlock};
use crate::neuron::SpikeTrain;
use crate::rng::stream;
use crate::synthetic;
use crate::tensor::Tensor;

/// One batch of `[1, H, W]` inputs per round.
pub fn run_inputs(cfg: &RunConfig) -> Result<Vec<Vec<Tensor>>> {
    let (h, w) = (cfg.input.height, cfg.input.width);
    match &cfg.input.events {
        Some(ev) => {
            let events = load_events(&ev.path, ev.format)?;
            let window = match ev.window {
                Some([a, b]) => a..b,
                None => 0..events.iter().map(|e| e.t).max().map_or(1, |t| t + 1),
            };
            let frame = accumulate_events(&events, h, w, window)?;
            Ok(vec![vec![frame]; cfg.rounds])
        }
        None => {
            let images: Vec<Tensor> = synthetic::batch(cfg.input.batch * cfg.rounds, h, w, cfg.seed)?
                .into_iter()
                .map(|s| s.image)
                .collect();
            Ok(images.chunks(cfg.input.batch).map(<[Tensor]>::to_vec).collect())
        }
    }
}

fn seeded_block(cfg: &RunConfig) -> Result<TdeBlock> {
    TdeBlock::seeded(&cfg.tde_settings(), &mut stream(cfg.seed, "model"))
}

fn layer_train(sample: &crate::gating::SampleOutput, layer: usize) -> &SpikeTrain {
    if layer == 0 {
        &sample.encoder_spikes
    } else {
        &sample.spikes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    /// Spikes of the configured layer for the first sample of the last round.
    pub raster: SpikeTrain,
    /// Pattern histogram of the configured layer over the last round.
    pub histogram: PatternHistogram,
    /// Operation counts over all rounds.
    pub ledger: EnergyLedger,
    /// Encoder coefficients before each round, then after the last.
    pub alpha_trajectory: Vec<Vec<f64>>,
}

/// Runs `cfg.rounds` batches through the block (or the baseline when
/// `cfg.baseline` is set). Normalization is calibrated on the first batch.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let batches = run_inputs(cfg)?;
    let mut block = seeded_block(cfg)?;
    let pathway = if cfg.baseline { Pathway::Direct } else { Pathway::Enhanced };
    block.calibrate(&batches[0], pathway)?;

    let steps = cfg.time_steps;
    let mut ledger = EnergyLedger::new();
    let mut trajectory = vec![block.encoder.alpha.clone()];
    let mut last = None;
    for batch in &batches {
        let (samples, histograms) = if cfg.baseline {
            let (samples, l) = measure(|| baseline_forward(&block, batch));
            let samples = samples?;
            ledger.merge(&l);
            let h = layer_histograms(&samples, steps)?;
            (samples, h)
        } else {
            let out = tde_forward(&mut block, batch, cfg.gating)?;
            ledger.merge(&out.diagnostics.ledger);
            (out.samples, out.diagnostics.histograms)
        };
        trajectory.push(block.encoder.alpha.clone());
        last = Some((samples, histograms));
    }
    let (samples, mut histograms) = last.ok_or(Error::Empty { op: "simulate" })?;
    Ok(Simulation {
        raster: layer_train(&samples[0], cfg.layer).clone(),
        histogram: histograms.swap_remove(cfg.layer),
        ledger,
        alpha_trajectory: trajectory,
    })
}

pub const ALPHA_HEADER: &str = "round,t,alpha";

/// `round,t,alpha` rows; `t` is 1-based and round 0 holds the initial values.
pub fn write_alpha_trajectory(trajectory: &[Vec<f64>], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{ALPHA_HEADER}")?;
    for (round, alpha) in trajectory.iter().enumerate() {
        for (t, a) in alpha.iter().enumerate() {
            writeln!(out, "{round},{},{a}", t + 1)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CountsJson {
    mul: u64,
    ac: u64,
    energy_joules: f64,
}

impl From<OpCounts> for CountsJson {
    fn from(c: OpCounts) -> Self {
        Self {
            mul: c.mul,
            ac: c.ac,
            energy_joules: c.energy_joules(),
        }
    }
}

/// `{"tags": {tag: counts}, "total": counts}` with counts `{mul, ac, energy_joules}`.
pub fn ledger_json(ledger: &EnergyLedger) -> String {
    #[derive(Serialize)]
    struct LedgerJson {
        tags: std::collections::BTreeMap<String, CountsJson>,
        total: CountsJson,
    }
    let doc = LedgerJson {
        tags: ledger.tags().map(|(t, c)| (t.to_string(), c.into())).collect(),
        total: ledger.total().into(),
    };
    serde_json::to_string_pretty(&doc).expect("ledger serializes")
}

pub const RASTER_FILE: &str = "raster.csv";
pub const HISTOGRAM_FILE: &str = "histogram.json";
pub const LEDGER_FILE: &str = "ledger.json";
pub const ALPHA_FILE: &str = "alpha_trajectory.csv";

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the four simulation outputs into `dir`, creating it if needed.
pub fn write_simulation(sim: &Simulation, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut raster = Vec::new();
    write_raster(&sim.raster, 0..sim.raster.neurons(), &mut raster).expect("write to memory");
    write_file(dir, RASTER_FILE, &raster)?;
    write_file(dir, HISTOGRAM_FILE, format!("{}\n", sim.histogram.to_json()).as_bytes())?;
    write_file(dir, LEDGER_FILE, format!("{}\n", ledger_json(&sim.ledger)).as_bytes())?;
    let mut alpha = Vec::new();
    write_alpha_trajectory(&sim.alpha_trajectory, &mut alpha).expect("write to memory");
    write_file(dir, ALPHA_FILE, &alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiversityReport {
    pub layer: usize,
    #[serde(rename = "T")]
    pub time_steps: usize,
    pub baseline: PatternHistogram,
    pub tde: PatternHistogram,
    pub coverage_baseline: usize,
    pub coverage_tde: usize,
    pub entropy_baseline: f64,
    pub entropy_tde: f64,
}

impl DiversityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn summary_line(&self) -> String {
        let max = 1usize << self.time_steps;
        format!(
            "layer {}: coverage baseline {}/{max}, tde {}/{max}",
            self.layer, self.coverage_baseline, self.coverage_tde
        )
    }
}

/// Baseline and enhanced pipelines on the first batch of the same seed.
/// Each pathway calibrates its own normalization; gating is not applied.
pub fn diversity(cfg: &RunConfig, layer: usize) -> Result<DiversityReport> {
    if layer >= SPIKING_LAYERS {
        return Err(Error::invalid(
            "diversity",
            format!("layer {layer} out of range (0..{SPIKING_LAYERS})"),
        ));
    }
    let batch = run_inputs(cfg)?.swap_remove(0);
    let mut block = seeded_block(cfg)?;
    let mut direct = block.clone();
    direct.calibrate(&batch, Pathway::Direct)?;
    block.calibrate(&batch, Pathway::Enhanced)?;
    let steps = cfg.time_steps;
    let baseline = layer_histograms(&baseline_forward(&direct, &batch)?, steps)?.swap_remove(layer);
    let tde = tde_forward(&mut block, &batch, false)?
        .diagnostics
        .histograms
        .swap_remove(layer);
    Ok(DiversityReport {
        layer,
        time_steps: steps,
        coverage_baseline: coverage(&baseline),
        coverage_tde: coverage(&tde),
        entropy_baseline: pattern_entropy(&baseline)?,
        entropy_tde: pattern_entropy(&tde)?,
        baseline,
        tde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.input.height = 8;
        cfg.input.width = 8;
        cfg.input.batch = 2;
        cfg.rounds = 2;
        cfg.encoder.channels = 2;
        cfg.layer_channels = 2;
        cfg.attention.spatial_kernel = 3;
        cfg
    }

    #[test]
    fn trajectory_has_one_entry_per_round_plus_one() {
        let sim = simulate(&small()).unwrap();
        assert_eq!(sim.alpha_trajectory.len(), 3);
        assert_eq!(sim.alpha_trajectory[0], vec![0.5; 4]);
        assert_ne!(sim.alpha_trajectory[1], sim.alpha_trajectory[0]);
        assert_eq!(sim.raster.shape(), &[4, 2, 8, 8]);
        assert_eq!(sim.histogram.total(), 2 * 2 * 64);
        assert!(sim.ledger.tag("attention").ac > 0);
        assert_eq!(sim.ledger.tag("attention").mul, 0);
    }

    #[test]
    fn gating_off_keeps_alpha() {
        let cfg = RunConfig { gating: false, ..small() };
        let sim = simulate(&cfg).unwrap();
        assert!(sim.alpha_trajectory.iter().all(|a| a == &vec![0.5; 4]));
    }

    #[test]
    fn variant_none_with_unit_alpha_equals_baseline() {
        let mut cfg = small();
        cfg.attention.variant = crate::attention::AttentionVariant::None;
        cfg.encoder.alpha_init = 1.0;
        for layer in 0..SPIKING_LAYERS {
            cfg.layer = layer;
            let tde = simulate(&cfg).unwrap();
            let base = simulate(&RunConfig { baseline: true, ..cfg.clone() }).unwrap();
            assert_eq!(tde.raster, base.raster);
            assert_eq!(tde.histogram, base.histogram);
        }
    }

    #[test]
    fn alpha_csv_layout() {
        let mut out = Vec::new();
        write_alpha_trajectory(&[vec![0.5, 0.5], vec![0.55, 0.45]], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "round,t,alpha\n0,1,0.5\n0,2,0.5\n1,1,0.55\n1,2,0.45\n"
        );
    }

    #[test]
    fn ledger_json_fields() {
        let mut l = EnergyLedger::new();
        l.record("attention", OpCounts::new(1, 2));
        let v: serde_json::Value = serde_json::from_str(&ledger_json(&l)).unwrap();
        assert_eq!(v["tags"]["attention"]["mul"], 1);
        assert_eq!(v["total"]["ac"], 2);
        let e = v["total"]["energy_joules"].as_f64().unwrap();
        assert!((e - (3.7e-12 + 1.8e-12)).abs() < 1e-24);
    }

    #[test]
    fn diversity_rejects_layer_out_of_range() {
        assert!(diversity(&small(), SPIKING_LAYERS).is_err());
        let r = diversity(&small(), 0).unwrap();
        assert_eq!(r.baseline.counts.len(), 16);
        assert_eq!(r.baseline.total(), r.tde.total());
    }
}
