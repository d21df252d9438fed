//! Autodiff against central finite differences on a small seeded network.

use rand::Rng;
use serde::Serialize;

use super::{finite_diff, SpikeMode, Tape, Var};
use crate::error::{Error, Result};
use crate::neuron::LifParams;
use crate::rng::{normal_tensor, stream};
use crate::tensor::Tensor;

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// `‖a - b‖ / max(‖a‖, ‖b‖, REL_ERROR_FLOOR)` in the Euclidean norm.
pub fn tensor_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    diff / scale.max(REL_ERROR_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub h: f64,
    pub coordinates: usize,
    /// Largest per-parameter relative error; the pass criterion.
    pub max_rel_error: f64,
    /// Parameter with the largest per-parameter error.
    pub worst: String,
    /// Largest single-coordinate relative error, for diagnosis. It is
    /// dominated by the `O(h^2)` truncation term on small gradients.
    pub max_elementwise_error: f64,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

const TIME_STEPS: usize = 3;
const SIDE: usize = 4;

struct Params {
    named: Vec<(&'static str, Tensor)>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

fn params(seed: u64) -> Result<Params> {
    let mut rng = stream(seed, "gradcheck");
    let input = normal_tensor(&[TIME_STEPS, 1, SIDE, SIDE], &mut rng);
    let w1 = uniform(&[2, 1, 3, 3], 1.0 / 3.0, &mut rng);
    let b1 = uniform(&[2], 0.2, &mut rng);
    let gamma = Tensor::from_fn(&[2], |_| rng.random_range(0.5..1.5));
    let beta = uniform(&[2], 0.3, &mut rng);
    let w2 = uniform(&[2, 2, 3, 3], 1.0 / 18f64.sqrt(), &mut rng);
    let readout = uniform(&[1, 2, SIDE, SIDE], 1.0, &mut rng);
    let running_mean = (0..2).map(|_| rng.random_range(-0.2..0.2)).collect();
    let running_var = (0..2).map(|_| rng.random_range(0.5..1.5)).collect();
    Ok(Params {
        named: vec![
            ("input", input),
            ("conv1.weight", w1),
            ("conv1.bias", b1),
            ("bn.gamma", gamma),
            ("bn.beta", beta),
            ("conv2.weight", w2),
            ("readout", readout),
        ],
        running_mean,
        running_var,
    })
}

/// conv → BN(eval) → LIF → conv → LIF → weighted sum, in relaxed mode.
fn build(tape: &mut Tape, p: &Params, values: &[Tensor]) -> Result<(Vec<Var>, Var)> {
    let leaves: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
    let [x, w1, b1, gamma, beta, w2, readout] = leaves[..] else {
        unreachable!("seven parameters")
    };
    let lif = LifParams::default();
    let c1 = tape.conv2d(x, w1, Some(b1), 1, 1)?;
    let n1 = tape.batchnorm_eval(c1, gamma, beta, &p.running_mean, &p.running_var, 1e-5)?;
    let s1 = tape.lif(n1, &lif, SpikeMode::Relaxed)?;
    let c2 = tape.conv2d(s1, w2, None, 1, 1)?;
    let s2 = tape.lif(c2, &lif, SpikeMode::Relaxed)?;
    let weighted = tape.mul(s2, readout)?;
    let loss = tape.sum(weighted);
    Ok((leaves, loss))
}

/// Compares reverse-mode gradients of every parameter with central
/// differences of step `h`. Only the relaxed forward is differentiable, so
/// `SpikeMode::Spiking` is refused.
pub fn gradcheck(seed: u64, h: f64, mode: SpikeMode) -> Result<GradcheckReport> {
    if mode == SpikeMode::Spiking {
        return Err(Error::invalid(
            "gradcheck",
            "finite differences are undefined through the hard threshold; use relaxed mode",
        ));
    }
    let p = params(seed)?;
    let values: Vec<Tensor> = p.named.iter().map(|(_, t)| t.clone()).collect();
    let mut tape = Tape::new();
    let (leaves, loss) = build(&mut tape, &p, &values)?;
    let grads = tape.backward(loss)?;

    let mut report = GradcheckReport {
        seed,
        h,
        coordinates: 0,
        max_rel_error: 0.0,
        worst: String::new(),
        max_elementwise_error: 0.0,
    };
    for (k, (name, value)) in p.named.iter().enumerate() {
        let analytic = grads
            .wrt(leaves[k])
            .unwrap_or_else(|| Tensor::zeros(value.shape()));
        let mut failure = None;
        let numeric = finite_diff(
            |probe| {
                let mut vals = values.clone();
                vals[k] = probe.clone();
                let mut t = Tape::new();
                match build(&mut t, &p, &vals) {
                    Ok((_, l)) => t.value(l).data()[0],
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            value,
            h,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let numeric = numeric?;
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            report.max_elementwise_error = report.max_elementwise_error.max(relative_error(*a, *n));
        }
        report.coordinates += value.len();
        let err = tensor_relative_error(analytic.data(), numeric.data());
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = (*name).to_string();
        }
    }
    Ok(report)
}
