//! File interfaces consumed by external plotting: raster, histogram, energy,
//! alpha trajectory, loss curve and ledger.

use tde_snn::attention::AttentionVariant;
use tde_snn::config::RunConfig;
use tde_snn::diversity::{pattern_histogram, read_raster, write_raster, PatternHistogram, RASTER_HEADER};
use tde_snn::energy::{EnergyLedger, EnergyReport, OpCounts};
use tde_snn::neuron::SpikeTrain;
use tde_snn::pipeline::{ledger_json, simulate, write_alpha_trajectory, write_simulation, ALPHA_HEADER};
use tde_snn::tensor::Tensor;
use tde_snn::train::{write_loss_csv, LossCurve, LOSS_HEADER};

fn train() -> SpikeTrain {
    let bits = [1., 0., 1., 1., 0., 0., 1., 0., 0., 1., 1., 1.];
    SpikeTrain::new(Tensor::new(vec![3, 2, 2], bits.to_vec()).unwrap()).unwrap()
}

#[test]
fn raster_rows_and_round_trip() {
    let spikes = train();
    let mut buf = Vec::new();
    write_raster(&spikes, 0..4, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], RASTER_HEADER);
    assert_eq!(lines.len(), 1 + 4 * 3);
    // neuron-major, t from 1
    assert_eq!(&lines[1..4], ["0,1,1", "0,2,0", "0,3,0"]);
    let back = read_raster(&buf[..], &[2, 2]).unwrap();
    assert_eq!(back, spikes);
}

#[test]
fn raster_rejects_bad_rows() {
    assert!(read_raster("n,t,s\n".as_bytes(), &[1]).is_err());
    let bad = format!("{RASTER_HEADER}\n0,1\n");
    assert!(read_raster(bad.as_bytes(), &[1]).is_err());
    let bad = format!("{RASTER_HEADER}\n5,1,1\n");
    assert!(read_raster(bad.as_bytes(), &[1]).is_err());
}

#[test]
fn histogram_json_layout() {
    let h = pattern_histogram(train().as_tensor()).unwrap();
    assert_eq!(h.total(), 4);
    let v: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
    assert_eq!(v["T"], 3);
    assert_eq!(v["counts"].as_array().unwrap().len(), 8);
    let back: PatternHistogram = serde_json::from_str(&h.to_json()).unwrap();
    assert_eq!(back, h);
}

#[test]
fn energy_report_json_and_csv() {
    let mut r = EnergyReport::new(AttentionVariant::Tcsa, [4, 128, 80, 40], OpCounts::new(5_750_000, 576_000));
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["variant"], "tcsa");
    assert_eq!(v["mul"], 5_750_000);
    assert_eq!(v["ac"], 576_000);
    assert!(v["ratio_vs_baseline"].is_null());
    assert!((v["energy_joules"].as_f64().unwrap() - 2.17934e-5).abs() < 1e-12);
    assert_eq!(r.csv_row().split(',').count(), EnergyReport::CSV_HEADER.split(',').count());
    r.ratio_vs_baseline = Some(0.5);
    assert!(r.csv_row().ends_with(",0.5"));
    assert!(r.csv_row().starts_with("tcsa,4x128x80x40,5750000,576000,"));
}

#[test]
fn alpha_csv_layout() {
    let mut buf = Vec::new();
    write_alpha_trajectory(&[vec![0.5, 0.5], vec![0.55, 0.45]], &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        format!("{ALPHA_HEADER}\n0,1,0.5\n0,2,0.5\n1,1,0.55\n1,2,0.45\n")
    );
}

#[test]
fn loss_csv_layout() {
    let a = LossCurve { losses: vec![1.0, 0.5], alpha: vec![] };
    let b = LossCurve { losses: vec![2.0, 0.25], alpha: vec![] };
    let mut buf = Vec::new();
    write_loss_csv(&a, &b, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{LOSS_HEADER}\n0,1,2\n1,0.5,0.25\n"));
    let short = LossCurve { losses: vec![1.0], alpha: vec![] };
    assert!(write_loss_csv(&a, &short, Vec::new()).is_err());
}

#[test]
fn ledger_json_layout() {
    let mut l = EnergyLedger::new();
    l.record("attention", OpCounts::new(0, 10));
    l.record("conv", OpCounts::new(2, 2));
    let v: serde_json::Value = serde_json::from_str(&ledger_json(&l)).unwrap();
    assert_eq!(v["tags"]["attention"]["ac"], 10);
    assert_eq!(v["tags"]["conv"]["mul"], 2);
    assert_eq!(v["total"]["mul"], 2);
    assert_eq!(v["total"]["ac"], 12);
    assert!((v["total"]["energy_joules"].as_f64().unwrap() - (2.0 * 3.7e-12 + 12.0 * 0.9e-12)).abs() < 1e-24);
}

#[test]
fn simulation_outputs_parse_back() {
    let cfg = RunConfig::parse(
        r#"{"schema": 1, "input": {"height": 8, "width": 8, "batch": 2},
            "encoder": {"channels": 4}, "layer_channels": 4,
            "attention": {"spatial_kernel": 3}, "rounds": 2}"#,
        None,
    )
    .unwrap();
    let sim = simulate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_simulation(&sim, dir.path()).unwrap();
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();

    let neuron_shape = &sim.raster.shape()[1..];
    let raster = read_raster(read("raster.csv").as_bytes(), neuron_shape).unwrap();
    assert_eq!(raster, sim.raster);

    let h: PatternHistogram = serde_json::from_str(&read("histogram.json")).unwrap();
    assert_eq!(h, sim.histogram);
    assert_eq!(h.total() as usize, 2 * sim.raster.neurons());

    let alpha = read("alpha_trajectory.csv");
    assert_eq!(alpha.lines().count(), 1 + 3 * 4);

    let ledger: serde_json::Value = serde_json::from_str(&read("ledger.json")).unwrap();
    assert_eq!(ledger["total"]["mul"].as_u64(), Some(sim.ledger.mul_count()));
    assert_eq!(ledger["tags"]["attention"]["mul"], 0);
}
