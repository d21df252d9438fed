//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! A criterion that is known to be red is still evaluated and still prints
//! FAIL. The test itself fails if the set of failing criteria differs from
//! `KNOWN_RED` in either direction. This target runs without the test
//! harness so the table is printed even when output is captured.

use tde_snn::attention::AttentionVariant;
use tde_snn::autodiff::{gradcheck, SpikeMode};
use tde_snn::config::RunConfig;
use tde_snn::encoder::{direct_spikes, se_encode, EncoderConfig, EncoderState};
use tde_snn::energy::{energy_of, profile_attention, PAPER_SHAPE};
use tde_snn::gating::attention_gate_update;
use tde_snn::neuron::{lif_run, LifParams};
use tde_snn::pipeline::{diversity, simulate, write_simulation};
use tde_snn::rng::stream;
use tde_snn::synthetic;
use tde_snn::tensor::Tensor;
use tde_snn::train::train;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

/// Criteria expected to fail, with the recorded reason.
const KNOWN_RED: &[(&str, &str)] = &[(
    "toy-training",
    "TDE ends slightly above the baseline at the golden seed",
)];

fn within(actual: f64, expected: f64, rel: f64) -> bool {
    ((actual - expected) / expected).abs() <= rel
}

fn energy_formula() -> Outcome {
    let tcsa = energy_of(5_750_000, 576_000);
    let sda = energy_of(0, 5_820_000);
    let ratio = sda / tcsa;
    let detail = format!("tcsa {:.4} uJ, sda {:.4} uJ, ratio {ratio:.4}", tcsa * 1e6, sda * 1e6);
    if within(tcsa, 21.79e-6, 0.005) && within(sda, 5.238e-6, 0.005) && (ratio - 0.240).abs() <= 0.002 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sda_zero_mul() -> Outcome {
    let mut acs = Vec::new();
    for seed in 0..5 {
        let l = profile_attention(AttentionVariant::Sda, PAPER_SHAPE, seed).map_err(|e| e.to_string())?;
        if l.mul_count() != 0 {
            return Err(format!("seed {seed}: {} MUL", l.mul_count()));
        }
        acs.push(l.ac_count());
    }
    Ok(format!("0 MUL over seeds 0..5, AC {acs:?}"))
}

fn tcsa_energy() -> Outcome {
    let l = profile_attention(AttentionVariant::Tcsa, PAPER_SHAPE, 42).map_err(|e| e.to_string())?;
    let e = l.energy_joules();
    let detail = format!("{} MUL, {} AC, {:.4} uJ", l.mul_count(), l.ac_count(), e * 1e6);
    if within(e, 21.8e-6, 0.2) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lif_trace() -> Outcome {
    let p = LifParams::default();
    let x = Tensor::new(vec![3, 1], vec![0.6; 3]).unwrap();
    let trace = lif_run(&x, &p, None).map_err(|e| e.to_string())?;
    // same-order recurrence: H = V + X, V = beta * (H - v_th * S)
    let mut v = 0.0f64;
    let mut want_v = Vec::new();
    for _ in 0..3 {
        let h = v + 0.6;
        let s = if h >= 1.0 { 1.0 } else { 0.0 };
        v = 0.5 * (h - s);
        want_v.push(v);
    }
    let spikes = trace.spikes.as_tensor().data().to_vec();
    let got_v = trace.potential.data().to_vec();
    let close: Vec<bool> = got_v.iter().zip([0.3, 0.45, 0.025]).map(|(a, b)| (a - b).abs() < 1e-15).collect();
    let detail = format!("spikes {spikes:?}, V {got_v:?}");
    if spikes == [0.0, 0.0, 1.0] && got_v == want_v && close.iter().all(|&c| c) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn baseline_equivalence() -> Outcome {
    let image = synthetic::batch(1, 16, 16, 42).map_err(|e| e.to_string())?.remove(0).image;
    let cfg = EncoderConfig { alpha_init: 1.0, ..EncoderConfig::default() };
    let mut enc = EncoderState::seeded(1, 4, &cfg, &mut stream(42, "model")).map_err(|e| e.to_string())?;
    enc.calibrate(std::slice::from_ref(&image)).map_err(|e| e.to_string())?;
    let p = LifParams::default();
    let se = se_encode(&image, &enc, &p).map_err(|e| e.to_string())?;
    let direct = direct_spikes(&image, &enc, &p).map_err(|e| e.to_string())?;
    if se != direct {
        return Err("SE with unit alpha differs from direct encoding".into());
    }

    let mut plain = RunConfig::default();
    plain.attention.variant = AttentionVariant::None;
    plain.encoder.alpha_init = 1.0;
    let mut base = plain.clone();
    base.baseline = true;
    for layer in 0..2 {
        plain.layer = layer;
        base.layer = layer;
        let a = simulate(&plain).map_err(|e| e.to_string())?;
        let b = simulate(&base).map_err(|e| e.to_string())?;
        if a.raster != b.raster || a.histogram != b.histogram {
            return Err(format!("layer {layer}: variant none differs from the plain pipeline"));
        }
    }
    Ok(format!("encoder bit-equal ({} spikes); end to end equal at both layers", se.spike_count()))
}

const GOLDEN_BASELINE: [u64; 16] = [6750, 245, 383, 0, 0, 113, 11, 21, 0, 0, 0, 0, 0, 0, 0, 669];
const GOLDEN_TDE: [u64; 16] = [7531, 36, 77, 44, 21, 24, 45, 178, 6, 4, 22, 21, 1, 4, 41, 137];

fn pattern_recovery() -> Outcome {
    let r = diversity(&RunConfig::default(), 0).map_err(|e| e.to_string())?;
    let detail = format!("coverage baseline {}, tde {}", r.coverage_baseline, r.coverage_tde);
    if r.baseline.counts != GOLDEN_BASELINE || r.tde.counts != GOLDEN_TDE {
        return Err(format!("{detail}; counts moved from golden: {:?} / {:?}", r.baseline.counts, r.tde.counts));
    }
    if r.coverage_tde > r.coverage_baseline && r.coverage_tde == 16 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gating_arithmetic() -> Outcome {
    let mut bar = vec![0.5, 0.5];
    let g = Tensor::new(vec![2, 2], vec![0.4, 0.8, 0.6, 0.2]).unwrap();
    let alpha = attention_gate_update(&g, &mut bar).map_err(|e| e.to_string())?;
    if (alpha[0] - 0.55).abs() > 1e-15 || (alpha[1] - 0.45).abs() > 1e-15 {
        return Err(format!("alpha {alpha:?}"));
    }
    let c = 0.9;
    let mut bar = vec![0.1];
    let g = Tensor::full(&[1, 2], c);
    let mut dist = (bar[0] - c).abs();
    for call in 0..10 {
        attention_gate_update(&g, &mut bar).map_err(|e| e.to_string())?;
        let d = (bar[0] - c).abs();
        if (d - dist / 2.0).abs() > 1e-15 {
            return Err(format!("call {call}: distance {d} after {dist}"));
        }
        dist = d;
    }
    Ok(format!("alpha {alpha:?}; distance halved 10 times to {dist:.3e}"))
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let r = gradcheck(seed, 1e-4, SpikeMode::Relaxed).map_err(|e| e.to_string())?;
        worst = worst.max(r.max_rel_error);
    }
    let detail = format!("max relative error {worst:.3e} over 5 seeds");
    if worst < 1e-4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn toy_training() -> Outcome {
    let cfg = RunConfig::default();
    let window = cfg.train.smoothing_window;
    let tde = train(cfg.run_spec(true), cfg.train.clone()).map_err(|e| e.to_string())?;
    let base = train(cfg.run_spec(false), cfg.train.clone()).map_err(|e| e.to_string())?;
    let (t0, t1) = tde.smoothed_ends(window);
    let (b0, b1) = base.smoothed_ends(window);
    let detail = format!("tde {t0:.6} -> {t1:.6}, baseline {b0:.6} -> {b1:.6}");
    if t1 < t0 && b1 < b0 && t1 <= b1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let cfg = RunConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let sim = simulate(&cfg).map_err(|e| e.to_string())?;
        let out = dir.path().join(run);
        write_simulation(&sim, &out).map_err(|e| e.to_string())?;
        let mut files = Vec::new();
        for f in ["raster.csv", "histogram.json", "ledger.json", "alpha_trajectory.csv"] {
            files.push(std::fs::read(out.join(f)).map_err(|e| e.to_string())?);
        }
        outputs.push(files);
    }
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    if outputs[0] == outputs[1] {
        Ok(format!("4 files, {bytes} bytes identical"))
    } else {
        Err("outputs differ between runs".into())
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("energy-formula", energy_formula),
        ("sda-zero-mul", sda_zero_mul),
        ("tcsa-energy", tcsa_energy),
        ("lif-trace", lif_trace),
        ("baseline-equivalence", baseline_equivalence),
        ("pattern-recovery", pattern_recovery),
        ("gating-arithmetic", gating_arithmetic),
        ("gradient-check", gradient_check),
        ("toy-training", toy_training),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                let note = KNOWN_RED
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, why)| format!(" [known: {why}]"))
                    .unwrap_or_default();
                println!("FAIL {name}: {detail}{note}");
                failed.push(name);
            }
        }
    }
    let expected: Vec<&str> = KNOWN_RED.iter().map(|(n, _)| *n).collect();
    if failed != expected {
        eprintln!("failing criteria {failed:?} differ from the known set {expected:?}");
        std::process::exit(1);
    }
}
