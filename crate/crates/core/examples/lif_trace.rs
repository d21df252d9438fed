//! Steps a single LIF neuron by hand and prints its trajectory.
//!
//! Usage: `cargo run --example lif_trace -- 0.6 0.6 0.6`

use tde_snn::neuron::{lif_run, LifParams};
use tde_snn::tensor::Tensor;

fn main() -> tde_snn::Result<()> {
    let mut inputs: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if inputs.is_empty() {
        inputs = vec![0.6; 3];
    }
    let p = LifParams::default();
    let x = Tensor::new(vec![inputs.len(), 1], inputs.clone())?;
    let trace = lif_run(&x, &p, None)?;
    println!("t,x,h,spike,v");
    for (t, x) in inputs.iter().enumerate() {
        println!(
            "{},{x},{},{},{}",
            t + 1,
            trace.membrane.data()[t],
            trace.spikes.as_tensor().data()[t],
            trace.potential.data()[t]
        );
    }
    Ok(())
}
