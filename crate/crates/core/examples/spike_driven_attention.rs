//! Runs spike-driven attention on a random membrane tensor and shows the
//! per-dimension weights next to the operation counts of both
//! attention variants.

use tde_snn::attention::{attention_forward, AttentionConfig, AttentionVariant, Dim};
use tde_snn::energy::profile_attention_on;
use tde_snn::rng::{normal_tensor, stream};

fn main() -> tde_snn::Result<()> {
    let shape = [4, 16, 8, 8];
    let h = normal_tensor(&shape, &mut stream(7, "membrane"));
    for variant in [AttentionVariant::Tcsa, AttentionVariant::Sda] {
        let cfg = AttentionConfig::seeded(variant, 4, 16, 7, &mut stream(7, "attention"))?;
        let ledger = profile_attention_on(&h, &cfg)?;
        println!("{variant}: {} MUL, {} AC, {:.3e} J", ledger.mul_count(), ledger.ac_count(), ledger.energy_joules());
        if let Some(w) = attention_forward(&h, &cfg)?.weights {
            for dim in Dim::ALL {
                let (s, f) = (&w.get(dim).spike, &w.get(dim).float);
                let on = s.data().iter().filter(|&&v| v != 0.0).count();
                let mean = f.data().iter().sum::<f64>() / f.len() as f64;
                println!("  {dim:?} {:?}: {on}/{} spiking, mean float weight {mean:.3}", s.shape(), s.len());
            }
        }
    }
    Ok(())
}
