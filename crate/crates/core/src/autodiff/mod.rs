//! Minimal reverse-mode differentiation over the tensor kernels.
//!
//! Values are computed eagerly as operations are recorded on a [`Tape`];
//! [`Tape::backward`] then walks the tape in reverse. The spike nonlinearity
//! uses the arctangent surrogate
//!
//! ```text
//! σ(x)  = 1/2 + atan(π α x / 2) / π
//! σ'(x) = (α / 2) / (1 + (π α x / 2)^2)
//! ```
//!
//! In [`SpikeMode::Relaxed`] the forward pass is `σ` itself, so the graph is
//! smooth end to end and can be checked against finite differences. In
//! [`SpikeMode::Spiking`] the forward pass is the hard step `Θ` and only the
//! backward pass uses `σ'` (straight-through).

mod gradcheck;

pub use gradcheck::{
    gradcheck, relative_error, tensor_relative_error, GradcheckReport, REL_ERROR_FLOOR,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::LifParams;
use crate::tensor::conv::{conv2d_grad_input, conv2d_grad_weights, conv2d_raw, linear_raw, Geometry};
use crate::tensor::{broadcast_shape, maxpool_with_argmax, Tensor};
use crate::tensor::broadcast::{broadcast_strides, for_each_broadcast};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpikeMode {
    Spiking,
    Relaxed,
}

impl std::str::FromStr for SpikeMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spiking" => Ok(Self::Spiking),
            "relaxed" => Ok(Self::Relaxed),
            other => Err(format!("unknown mode {other:?} (expected spiking or relaxed)")),
        }
    }
}

pub fn surrogate(x: f64, alpha: f64) -> f64 {
    0.5 + (std::f64::consts::PI * alpha * x / 2.0).atan() / std::f64::consts::PI
}

pub fn surrogate_grad(x: f64, alpha: f64) -> f64 {
    let u = std::f64::consts::PI * alpha * x / 2.0;
    (alpha / 2.0) / (1.0 + u * u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: Geometry,
        batch: usize,
    },
    BatchNormEval {
        input: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f64>,
        denom: Vec<f64>,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Spike {
        input: Var,
        threshold: f64,
        alpha: f64,
    },
    Sigmoid(Var),
    Select {
        input: Var,
        index: usize,
    },
    Stack(Vec<Var>),
    Reshape(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    SmoothL1 {
        pred: Var,
        target: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications. Every operand of entry `i` is
/// an earlier entry, so the tape is topologically sorted by construction.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or `None` when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<Tensor> {
        self.get(v).cloned()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::shape(op, a.shape(), b.shape())
}

/// Sums `grad` (at `out_shape`) down to `target` shape over broadcast axes.
fn reduce_to(grad: &[f64], out_shape: &[usize], target: &[usize]) -> Vec<f64> {
    let n: usize = target.iter().product();
    let mut acc = vec![0.0; n];
    let st = broadcast_strides(target, out_shape);
    let zeros = vec![0; out_shape.len()];
    for_each_broadcast(out_shape, &st, &zeros, |o, i, _| acc[i] += grad[o]);
    acc
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, ())> {
        let (x, y) = (self.value(a), self.value(b));
        let shape = broadcast_shape(x.shape(), y.shape()).ok_or_else(|| shape_err(op, x, y))?;
        let sa = broadcast_strides(x.shape(), &shape);
        let sb = broadcast_strides(y.shape(), &shape);
        let mut out = vec![0.0; shape.iter().product()];
        let (xd, yd) = (x.data(), y.data());
        for_each_broadcast(&shape, &sa, &sb, |o, i, j| out[o] = f(xd[i], yd[j]));
        Ok((Tensor::new(shape, out)?, ()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, _) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a).map(|v| v * factor);
        self.push(t, Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(t, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let t = Tensor::scalar(x.sum() / x.len() as f64);
        self.push(t, Op::Mean(a))
    }

    /// Convolution of `[C, H, W]` or `[N, C, H, W]` with weights `[O, C, k, k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(weight));
        let ws = w.shape();
        let (batch, chw) = match x.shape() {
            [c, h, wd] => (None, [*c, *h, *wd]),
            [n, c, h, wd] => (Some(*n), [*c, *h, *wd]),
            _ => return Err(shape_err("conv2d", x, w)),
        };
        if ws.len() != 4 || ws[1] != chw[0] || ws[2] != ws[3] {
            return Err(shape_err("conv2d", x, w));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [ws[0]] {
                return Err(shape_err("conv2d", w, self.value(b)));
            }
        }
        let geom = Geometry::new(chw[0], chw[1], chw[2], ws[0], ws[2], stride, padding)?;
        let n = batch.unwrap_or(1);
        let bias_data = bias.map(|b| self.value(b).data());
        let mut out = Vec::with_capacity(n * geom.out_len());
        for i in 0..n {
            let xs = &x.data()[i * geom.in_len()..(i + 1) * geom.in_len()];
            out.extend(conv2d_raw(&geom, xs, w.data(), bias_data, false));
        }
        let mut shape = vec![geom.out_c, geom.out_h, geom.out_w];
        if let Some(n) = batch {
            shape.insert(0, n);
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                batch: n,
            },
        ))
    }

    /// Eval-mode batch normalization with fixed running statistics and
    /// learnable `gamma`, `beta` (`[C]` each).
    pub fn batchnorm_eval(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let x = self.value(input);
        let s = x.shape();
        let channels = match s {
            [c, _, _] | [_, c, _, _] => *c,
            _ => return Err(Error::invalid("batchnorm", format!("expected rank 3 or 4, got {s:?}"))),
        };
        let (g, b) = (self.value(gamma), self.value(beta));
        if g.len() != channels || b.len() != channels || running_mean.len() != channels || running_var.len() != channels {
            return Err(Error::invalid("batchnorm", "per-channel parameter length mismatch"));
        }
        if eps.is_nan() || eps < 0.0 {
            return Err(Error::invalid("batchnorm", format!("eps must be >= 0, got {eps}")));
        }
        let denom: Vec<f64> = running_var.iter().map(|v| (v + eps).sqrt()).collect();
        if denom.contains(&0.0) {
            return Err(Error::invalid("batchnorm", "zero variance with eps = 0"));
        }
        let inner: usize = s[s.len() - 2..].iter().product();
        let mut out = vec![0.0; x.len()];
        for (block, chunk) in x.data().chunks(inner).enumerate() {
            let c = block % channels;
            for (k, &v) in chunk.iter().enumerate() {
                out[block * inner + k] = (v - running_mean[c]) / denom[c] * g.data()[c] + b.data()[c];
            }
        }
        let t = Tensor::new(s.to_vec(), out)?;
        Ok(self.push(
            t,
            Op::BatchNormEval {
                input,
                gamma,
                beta,
                mean: running_mean.to_vec(),
                denom,
            },
        ))
    }

    pub fn maxpool(&mut self, input: Var, axes: &[usize]) -> Result<Var> {
        let (t, argmax) = maxpool_with_argmax(self.value(input), axes)?;
        let t = t.into_float();
        Ok(self.push(t, Op::MaxPool { input, argmax }))
    }

    /// Spike nonlinearity applied to `input - threshold`.
    pub fn spike(&mut self, input: Var, threshold: f64, alpha: f64, mode: SpikeMode) -> Var {
        let t = match mode {
            SpikeMode::Relaxed => self.value(input).map(|v| surrogate(v - threshold, alpha)),
            SpikeMode::Spiking => self
                .value(input)
                .map(|v| if v - threshold >= 0.0 { 1.0 } else { 0.0 }),
        };
        self.push(
            t,
            Op::Spike {
                input,
                threshold,
                alpha,
            },
        )
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let t = self.value(input).map(crate::attention::sigmoid);
        self.push(t, Op::Sigmoid(input))
    }

    /// Slice `index` along the leading axis.
    pub fn select(&mut self, input: Var, index: usize) -> Result<Var> {
        let t = self.value(input).slice_leading(index)?.into_float();
        Ok(self.push(t, Op::Select { input, index }))
    }

    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<Tensor> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let t = Tensor::stack(&values)?.into_float();
        Ok(self.push(t, Op::Stack(parts.to_vec())))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(input).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(input)))
    }

    /// Fully connected map of the flattened input: `[out, in]` weights.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let ws = w.shape();
        if ws.len() != 2 || ws[1] != x.len() || b.shape() != [ws[0]] {
            return Err(shape_err("linear", x, w));
        }
        let out = linear_raw(w.data(), b.data(), x.data(), false);
        let t = Tensor::new(vec![ws[0]], out)?;
        Ok(self.push(t, Op::Linear { input, weight, bias }))
    }

    /// Mean smooth-L1 (Huber, transition at 1) loss against a constant target.
    pub fn smooth_l1(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(shape_err("smooth_l1", p, target));
        }
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| {
                let d = (a - b).abs();
                if d < 1.0 {
                    0.5 * d * d
                } else {
                    d - 0.5
                }
            })
            .sum::<f64>()
            / p.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SmoothL1 {
                pred,
                target: target.data().to_vec(),
            },
        ))
    }

    /// LIF population over the leading (time) axis of `inputs`, built from
    /// primitive operations. Returns the spike sequence `[T, ...]`.
    pub fn lif(&mut self, inputs: Var, p: &LifParams, mode: SpikeMode) -> Result<Var> {
        let steps = self.value(inputs).shape()[0];
        let mut v: Option<Var> = None;
        let mut spikes = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = self.select(inputs, t)?;
            let h = match v {
                Some(v) => self.add(v, x)?,
                None => x,
            };
            let s = self.spike(h, p.v_th, p.surrogate_alpha, mode);
            let reset = self.scale(s, p.v_th);
            let diff = self.sub(h, reset)?;
            v = Some(self.scale(diff, p.beta));
            spikes.push(s);
        }
        self.stack(&spikes)
    }

    /// Reverse pass from a scalar `loss`. Gradients are reported for leaves.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let out_shape = node.value.shape();
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(gout);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let ga = reduce_to(&gout, out_shape, self.value(*a).shape());
                    let mut gb = reduce_to(&gout, out_shape, self.value(*b).shape());
                    if matches!(node.op, Op::Sub(..)) {
                        gb.iter_mut().for_each(|g| *g = -*g);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let sa = broadcast_strides(x.shape(), out_shape);
                    let sb = broadcast_strides(y.shape(), out_shape);
                    let mut ga = vec![0.0; x.len()];
                    let mut gb = vec![0.0; y.len()];
                    for_each_broadcast(out_shape, &sa, &sb, |o, i, j| {
                        ga[i] += gout[o] * y.data()[j];
                        gb[j] += gout[o] * x.data()[i];
                    });
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, f) => acc(&mut grads, *a, gout.iter().map(|g| g * f).collect()),
                Op::Sum(a) => acc(&mut grads, *a, vec![gout[0]; self.value(*a).len()]),
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    acc(&mut grads, *a, vec![gout[0] / n as f64; n]);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                    batch,
                } => {
                    let (x, w) = (self.value(*input), self.value(*weight));
                    let mut gx = Vec::with_capacity(x.len());
                    let mut gw = vec![0.0; w.len()];
                    let mut gb = vec![0.0; geom.out_c];
                    let plane = geom.out_h * geom.out_w;
                    for n in 0..*batch {
                        let go = &gout[n * geom.out_len()..(n + 1) * geom.out_len()];
                        let xs = &x.data()[n * geom.in_len()..(n + 1) * geom.in_len()];
                        gx.extend(conv2d_grad_input(geom, go, w.data()));
                        conv2d_grad_weights(geom, go, xs, &mut gw);
                        for (c, g) in gb.iter_mut().enumerate() {
                            *g += go[c * plane..(c + 1) * plane].iter().sum::<f64>();
                        }
                    }
                    acc(&mut grads, *input, gx);
                    acc(&mut grads, *weight, gw);
                    if let Some(b) = bias {
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::BatchNormEval {
                    input,
                    gamma,
                    beta,
                    mean,
                    denom,
                } => {
                    let x = self.value(*input);
                    let g = self.value(*gamma).data();
                    let channels = mean.len();
                    let inner: usize = out_shape[out_shape.len() - 2..].iter().product();
                    let mut gx = vec![0.0; x.len()];
                    let mut gg = vec![0.0; channels];
                    let mut gbeta = vec![0.0; channels];
                    for (block, chunk) in x.data().chunks(inner).enumerate() {
                        let c = block % channels;
                        for (k, &v) in chunk.iter().enumerate() {
                            let idx = block * inner + k;
                            gx[idx] = gout[idx] / denom[c] * g[c];
                            gg[c] += gout[idx] * (v - mean[c]) / denom[c];
                            gbeta[c] += gout[idx];
                        }
                    }
                    acc(&mut grads, *input, gx);
                    acc(&mut grads, *gamma, gg);
                    acc(&mut grads, *beta, gbeta);
                }
                Op::MaxPool { input, argmax } => {
                    let mut gx = vec![0.0; self.value(*input).len()];
                    for (o, &src) in argmax.iter().enumerate() {
                        gx[src] += gout[o];
                    }
                    acc(&mut grads, *input, gx);
                }
                Op::Spike {
                    input,
                    threshold,
                    alpha,
                } => {
                    let x = self.value(*input).data();
                    let gx = x
                        .iter()
                        .zip(&gout)
                        .map(|(&v, g)| g * surrogate_grad(v - threshold, *alpha))
                        .collect();
                    acc(&mut grads, *input, gx);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let gx = y.iter().zip(&gout).map(|(&s, g)| g * s * (1.0 - s)).collect();
                    acc(&mut grads, *a, gx);
                }
                Op::Select { input, index } => {
                    let x = self.value(*input);
                    let mut gx = vec![0.0; x.len()];
                    let inner = gout.len();
                    gx[index * inner..(index + 1) * inner].copy_from_slice(&gout);
                    acc(&mut grads, *input, gx);
                }
                Op::Stack(parts) => {
                    let inner = gout.len() / parts.len();
                    for (k, p) in parts.iter().enumerate() {
                        acc(&mut grads, *p, gout[k * inner..(k + 1) * inner].to_vec());
                    }
                }
                Op::Reshape(a) => acc(&mut grads, *a, gout),
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let (x, w) = (self.value(*input).data(), self.value(*weight).data());
                    let n_in = x.len();
                    let mut gx = vec![0.0; n_in];
                    let mut gw = vec![0.0; w.len()];
                    for (o, &go) in gout.iter().enumerate() {
                        for i in 0..n_in {
                            gx[i] += go * w[o * n_in + i];
                            gw[o * n_in + i] += go * x[i];
                        }
                    }
                    acc(&mut grads, *input, gx);
                    acc(&mut grads, *weight, gw);
                    acc(&mut grads, *bias, gout);
                }
                Op::SmoothL1 { pred, target } => {
                    let p = self.value(*pred).data();
                    let n = p.len() as f64;
                    let gp = p
                        .iter()
                        .zip(target)
                        .map(|(a, b)| {
                            let d = a - b;
                            let g = if d.abs() < 1.0 { d } else { d.signum() };
                            gout[0] * g / n
                        })
                        .collect();
                    acc(&mut grads, *pred, gp);
                }
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = self.nodes.get(i)?;
                match (&node.op, g) {
                    (Op::Leaf, Some(g)) => Tensor::new(node.value.shape().to_vec(), g).ok(),
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads })
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn finite_diff(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Result<Tensor> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::invalid("finite_diff", format!("step must be > 0, got {h}")));
    }
    let mut probe = x.clone().into_float();
    let mut out = vec![0.0; x.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite { op: "finite_diff" });
        }
        *slot = (up - down) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), out)
}

#[cfg(test)]
mod tests;
