//! Simulates the enhanced block over a few batches and prints how the
//! gated encoder coefficients and the pattern coverage evolve.

use tde_snn::config::RunConfig;
use tde_snn::diversity::coverage;
use tde_snn::pipeline::simulate;

fn main() -> tde_snn::Result<()> {
    let mut cfg = RunConfig { rounds: 6, ..RunConfig::default() };
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    let sim = simulate(&cfg)?;
    for (round, alpha) in sim.alpha_trajectory.iter().enumerate() {
        let a: Vec<String> = alpha.iter().map(|v| format!("{v:.4}")).collect();
        println!("round {round}: alpha [{}]", a.join(", "));
    }
    println!(
        "encoder coverage {}/{} in the last round, firing rate {:.3}",
        coverage(&sim.histogram),
        sim.histogram.counts.len(),
        sim.raster.firing_rate()
    );
    println!(
        "{} MUL, {} AC ({} AC in attention)",
        sim.ledger.mul_count(),
        sim.ledger.ac_count(),
        sim.ledger.tag("attention").ac
    );
    Ok(())
}
