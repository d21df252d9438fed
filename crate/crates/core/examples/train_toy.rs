//! Trains the toy box regressor with and without the temporal dynamics
//! enhancer and prints smoothed losses.

use tde_snn::attention::AttentionVariant;
use tde_snn::autodiff::SpikeMode;
use tde_snn::neuron::LifParams;
use tde_snn::train::{train, Enhancement, RunSpec, TrainConfig};

fn main() -> tde_snn::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let cfg = TrainConfig::default();
    let spec = |enhanced| RunSpec {
        seed,
        time_steps: 4,
        lif: LifParams::default(),
        mode: SpikeMode::Spiking,
        enhanced,
    };
    let tde = train(
        spec(Some(Enhancement {
            variant: AttentionVariant::Sda,
            alpha_init: 0.5,
            gating: true,
            spatial_kernel: 7,
            k_percent: 50.0,
            attention_lif: LifParams::default(),
        })),
        cfg.clone(),
    )?;
    let base = train(spec(None), cfg.clone())?;
    for (name, curve) in [("tde", &tde), ("baseline", &base)] {
        let (first, last) = curve.smoothed_ends(cfg.smoothing_window);
        println!("{name:>8}: smoothed loss {first:.5} -> {last:.5}");
    }
    println!("final alpha {:?}", tde.alpha);
    Ok(())
}
