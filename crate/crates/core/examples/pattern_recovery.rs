//! Firing-pattern coverage of the first spiking layers, with and without
//! the temporal dynamics enhancer, on one seeded synthetic batch.

use tde_snn::attention::AttentionVariant;
use tde_snn::diversity::coverage;
use tde_snn::encoder::EncoderConfig;
use tde_snn::gating::{baseline_histograms, tde_forward, Pathway, TdeBlock, TdeSettings};
use tde_snn::neuron::LifParams;
use tde_snn::rng::stream;
use tde_snn::synthetic;

fn main() -> tde_snn::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let settings = TdeSettings {
        in_channels: 1,
        time_steps: 4,
        encoder: EncoderConfig::default(),
        layer_channels: 8,
        variant: AttentionVariant::Sda,
        spatial_kernel: 7,
        k_percent: 50.0,
        attention_lif: LifParams::default(),
        lif: LifParams::default(),
    };
    let mut block = TdeBlock::seeded(&settings, &mut stream(seed, "model"))?;
    let images: Vec<_> = synthetic::batch(4, 16, 16, seed)?
        .into_iter()
        .map(|s| s.image)
        .collect();
    let mut direct = block.clone();
    direct.calibrate(&images, Pathway::Direct)?;
    block.calibrate(&images, Pathway::Enhanced)?;
    let base = baseline_histograms(&direct, &images)?;
    let tde = tde_forward(&mut block, &images, false)?;
    for (layer, (b, t)) in base.iter().zip(&tde.diagnostics.histograms).enumerate() {
        println!("layer {layer}");
        println!("  baseline coverage {:>2}  {:?}", coverage(b), b.counts);
        println!("  tde      coverage {:>2}  {:?}", coverage(t), t.counts);
    }
    Ok(())
}
