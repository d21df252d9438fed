//! Compares tape gradients with central finite differences, first on a
//! scalar function and then on the seeded two-layer spiking network.

use tde_snn::autodiff::{finite_diff, gradcheck, tensor_relative_error, SpikeMode, Tape};
use tde_snn::tensor::Tensor;

fn main() -> tde_snn::Result<()> {
    let x = Tensor::new(vec![3], vec![0.5, -1.0, 2.0])?;
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let sq = tape.mul(v, v)?;
    let y = tape.sigmoid(sq);
    let loss = tape.sum(y);
    let analytic = tape.backward(loss)?.wrt(v).expect("x feeds the loss");
    let numeric = finite_diff(
        |x| x.data().iter().map(|v| 1.0 / (1.0 + (-v * v).exp())).sum(),
        &x,
        1e-5,
    )?;
    println!("sum(sigmoid(x^2)): relative error {:.2e}", tensor_relative_error(analytic.data(), numeric.data()));

    for h in [1e-3, 1e-4] {
        for seed in 0..3 {
            let r = gradcheck(seed, h, SpikeMode::Relaxed)?;
            println!(
                "network seed {seed}, h {h:e}: {:.2e} (worst {}, elementwise {:.2e})",
                r.max_rel_error, r.worst, r.max_elementwise_error
            );
        }
    }
    Ok(())
}
