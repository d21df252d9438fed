//! Energy of float attention versus spike-driven attention at the
//! reference feature-map shape, over several seeds.

use tde_snn::attention::AttentionVariant;
use tde_snn::energy::{profile_attention, EnergyReport, PAPER_SHAPE};

fn main() -> tde_snn::Result<()> {
    let seeds: Vec<u64> = std::env::args()
        .nth(1)
        .map(|n| (0..n.parse().unwrap_or(1)).collect())
        .unwrap_or_else(|| vec![42]);
    println!("{}", EnergyReport::CSV_HEADER);
    for seed in seeds {
        let tcsa = profile_attention(AttentionVariant::Tcsa, PAPER_SHAPE, seed)?;
        let sda = profile_attention(AttentionVariant::Sda, PAPER_SHAPE, seed)?;
        let ratio = sda.energy_joules() / tcsa.energy_joules();
        for (variant, ledger, r) in [
            (AttentionVariant::Tcsa, &tcsa, None),
            (AttentionVariant::Sda, &sda, Some(ratio)),
        ] {
            let report = EnergyReport {
                ratio_vs_baseline: r,
                ..EnergyReport::new(variant, PAPER_SHAPE, ledger.total())
            };
            println!("{}", report.csv_row());
        }
    }
    Ok(())
}
