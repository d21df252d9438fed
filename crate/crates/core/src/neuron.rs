//! Leaky integrate-and-fire dynamics and the two neuron groups used by
//! spike-driven attention.
//!
//! One step of a LIF population:
//!
//! ```text
//! H = V + X
//! S = Θ(H - v_th)        Θ(0) = 1
//! V = β (H - v_th S)     soft reset
//! ```
//!
//! Neuron state updates are not costed in the energy ledger; only synaptic
//! arithmetic in the tensor kernels is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub v_th: f64,
    pub beta: f64,
    pub surrogate_alpha: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            v_th: 1.0,
            beta: 0.5,
            surrogate_alpha: 2.0,
        }
    }
}

impl LifParams {
    pub fn new(v_th: f64, beta: f64) -> Result<Self> {
        let p = Self {
            v_th,
            beta,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_th.is_nan() || self.v_th <= 0.0 {
            return Err(Error::invalid("lif", format!("v_th must be > 0, got {}", self.v_th)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(
                "lif",
                format!("beta must lie in [0, 1], got {}", self.beta),
            ));
        }
        if !self.surrogate_alpha.is_finite() || self.surrogate_alpha <= 0.0 {
            return Err(Error::invalid(
                "lif",
                format!("surrogate_alpha must be > 0, got {}", self.surrogate_alpha),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn fires(&self, h: f64) -> bool {
        h - self.v_th >= 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LifState {
    pub v: Tensor,
}

impl LifState {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            v: Tensor::zeros(shape),
        }
    }
}

/// A binary `[T, ...]` tensor whose leading axis is time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrain(Tensor);

impl SpikeTrain {
    pub fn new(spikes: Tensor) -> Result<Self> {
        if spikes.rank() < 2 {
            return Err(Error::invalid(
                "spike_train",
                format!("expected [T, ...], got {:?}", spikes.shape()),
            ));
        }
        Ok(Self(spikes.into_binary()?))
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn time_steps(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn neurons(&self) -> usize {
        self.0.len() / self.time_steps()
    }

    pub fn spike_count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v != 0.0).count()
    }

    pub fn firing_rate(&self) -> f64 {
        if self.0.is_empty() {
            0.0
        } else {
            self.spike_count() as f64 / self.0.len() as f64
        }
    }
}

/// One LIF update. Returns the spikes and the post-reset state.
pub fn lif_step(state: &LifState, x: &Tensor, p: &LifParams) -> Result<(Tensor, LifState)> {
    p.validate()?;
    if x.shape() != state.v.shape() {
        return Err(Error::shape("lif_step", state.v.shape(), x.shape()));
    }
    x.ensure_finite("lif_step")?;
    let mut v = state.v.data().to_vec();
    let mut s = vec![0.0; v.len()];
    let mut h = vec![0.0; v.len()];
    step_raw(&mut v, x.data(), p, &mut s, &mut h);
    let spikes = Tensor::new(x.shape().to_vec(), s)?.binary_unchecked();
    let v = Tensor::new(x.shape().to_vec(), v)?;
    Ok((spikes, LifState { v }))
}

#[inline]
pub(crate) fn step_raw(v: &mut [f64], x: &[f64], p: &LifParams, s: &mut [f64], h: &mut [f64]) {
    for i in 0..v.len() {
        let hi = v[i] + x[i];
        let si = if p.fires(hi) { 1.0 } else { 0.0 };
        h[i] = hi;
        s[i] = si;
        v[i] = p.beta * (hi - p.v_th * si);
    }
}

/// Full record of a LIF run over a `[T, ...]` input.
#[derive(Clone, Debug, PartialEq)]
pub struct LifTrace {
    pub spikes: SpikeTrain,
    /// Pre-reset potentials `H_t`.
    pub membrane: Tensor,
    /// Post-reset potentials `V_t`.
    pub potential: Tensor,
}

/// Runs the population over the leading (time) axis of `inputs`.
/// `v0` defaults to zeros and must have the per-step shape.
pub fn lif_run(inputs: &Tensor, p: &LifParams, v0: Option<&Tensor>) -> Result<LifTrace> {
    p.validate()?;
    if inputs.rank() < 2 {
        return Err(Error::invalid(
            "lif_forward",
            format!("expected [T, ...] input, got {:?}", inputs.shape()),
        ));
    }
    let steps = inputs.shape()[0];
    if steps == 0 {
        return Err(Error::invalid("lif_forward", "T must be at least 1"));
    }
    inputs.ensure_finite("lif_forward")?;
    let step_shape = &inputs.shape()[1..];
    let inner: usize = step_shape.iter().product();
    let mut v = match v0 {
        Some(v0) if v0.shape() != step_shape => {
            return Err(Error::shape("lif_forward", step_shape, v0.shape()))
        }
        Some(v0) => v0.data().to_vec(),
        None => vec![0.0; inner],
    };
    let n = inputs.len();
    let (mut s, mut h, mut vv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for t in 0..steps {
        let r = t * inner..(t + 1) * inner;
        step_raw(
            &mut v,
            &inputs.data()[r.clone()],
            p,
            &mut s[r.clone()],
            &mut h[r.clone()],
        );
        vv[r].copy_from_slice(&v);
    }
    let shape = inputs.shape().to_vec();
    Ok(LifTrace {
        spikes: SpikeTrain(Tensor::new(shape.clone(), s)?.binary_unchecked()),
        membrane: Tensor::new(shape.clone(), h)?,
        potential: Tensor::new(shape, vv)?,
    })
}

pub fn lif_forward(inputs: &Tensor, p: &LifParams, v0: Option<&Tensor>) -> Result<SpikeTrain> {
    lif_run(inputs, p, v0).map(|t| t.spikes)
}

/// LIF¹ group: threshold firing that also exposes the pre-reset membrane
/// potential of every step as a real-valued output.
pub fn lif1_dual(inputs: &Tensor, p: &LifParams) -> Result<(SpikeTrain, Tensor)> {
    lif_run(inputs, p, None).map(|t| (t.spikes, t.membrane))
}

/// Number of units a top-`k_percent` group fires out of `n`.
pub fn topk_count(n: usize, k_percent: f64) -> usize {
    (((k_percent * n as f64) / 100.0).ceil() as usize).clamp(1, n)
}

/// LIF⁰ group: no threshold, the `ceil(k% · N)` most stimulated units fire.
/// Ties go to the lower flat index.
pub fn lif0_topk(x: &Tensor, k_percent: f64) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::Empty { op: "lif0_topk" });
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::invalid(
            "lif0_topk",
            format!("k_percent must lie in (0, 100], got {k_percent}"),
        ));
    }
    let data = x.data();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[b].total_cmp(&data[a]).then(a.cmp(&b)));
    let mut mask = vec![0.0; data.len()];
    for &i in &order[..topk_count(data.len(), k_percent)] {
        mask[i] = 1.0;
    }
    Ok(Tensor::new(x.shape().to_vec(), mask)?.binary_unchecked())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v_th: f64, beta: f64) -> LifParams {
        LifParams::new(v_th, beta).unwrap()
    }

    #[test]
    fn silent_neuron() {
        let (s, st) = lif_step(&LifState::zeros(&[1]), &Tensor::zeros(&[1]), &p(0.3, 0.5)).unwrap();
        assert_eq!(s.data(), &[0.0]);
        assert_eq!(st.v.data(), &[0.0]);
    }

    #[test]
    fn three_step_hand_trace() {
        let params = p(1.0, 0.5);
        let mut state = LifState::zeros(&[1]);
        let x = Tensor::full(&[1], 0.6);
        let mut spikes = vec![];
        let mut vs = vec![];
        for _ in 0..3 {
            let (s, next) = lif_step(&state, &x, &params).unwrap();
            spikes.push(s.data()[0]);
            vs.push(next.v.data()[0]);
            state = next;
        }
        assert_eq!(spikes, vec![0.0, 0.0, 1.0]);
        // Same recurrence evaluated by hand, in the same IEEE order.
        let v1 = 0.5 * (0.0 + 0.6);
        let v2 = 0.5 * (v1 + 0.6);
        let v3 = 0.5 * (v2 + 0.6 - 1.0);
        assert_eq!(vs, vec![v1, v2, v3]);
        for (got, want) in vs.iter().zip([0.3, 0.45, 0.025]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn threshold_equality_fires() {
        let (s, st) = lif_step(&LifState::zeros(&[1]), &Tensor::full(&[1], 0.7), &p(0.7, 0.9)).unwrap();
        assert_eq!(s.data(), &[1.0]);
        assert_eq!(st.v.data(), &[0.0]);
    }

    #[test]
    fn step_rejects_shape_and_nan() {
        let st = LifState::zeros(&[2]);
        assert!(lif_step(&st, &Tensor::zeros(&[3]), &p(1.0, 0.5)).is_err());
        let nan = Tensor::new(vec![2], vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            lif_step(&st, &nan, &p(1.0, 0.5)),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn params_are_validated() {
        assert!(LifParams::new(0.0, 0.5).is_err());
        assert!(LifParams::new(1.0, 1.5).is_err());
        assert!(LifParams::new(1.0, -0.1).is_err());
    }

    #[test]
    fn forward_all_zero_is_silent() {
        let s = lif_forward(&Tensor::zeros(&[4, 2, 3, 3]), &LifParams::default(), None).unwrap();
        assert_eq!(s.spike_count(), 0);
    }

    #[test]
    fn constant_threshold_input_fires_every_step() {
        let s = lif_forward(&Tensor::full(&[5, 3], 0.8), &p(0.8, 1.0), None).unwrap();
        assert_eq!(s.spike_count(), 15);
    }

    #[test]
    fn forward_reproduces_hand_trace() {
        let x = Tensor::full(&[3, 1], 0.6);
        let s = lif_forward(&x, &p(1.0, 0.5), None).unwrap();
        assert_eq!(s.as_tensor().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn forward_respects_initial_potential() {
        let x = Tensor::full(&[1, 1], 0.6);
        let v0 = Tensor::full(&[1], 0.5);
        let s = lif_forward(&x, &p(1.0, 0.5), Some(&v0)).unwrap();
        assert_eq!(s.as_tensor().data(), &[1.0]);
        assert!(lif_forward(&x, &p(1.0, 0.5), Some(&Tensor::zeros(&[2]))).is_err());
    }

    #[test]
    fn dual_membrane_is_pre_reset() {
        let (s, h) = lif1_dual(&Tensor::full(&[3, 1], 0.6), &p(1.0, 0.5)).unwrap();
        assert_eq!(s.as_tensor().data(), &[0.0, 0.0, 1.0]);
        assert_eq!(h.data()[0], 0.6);
        assert_eq!(h.data()[1], 0.5 * 0.6 + 0.6);
        assert_eq!(h.data()[2], 0.5 * (0.5 * 0.6 + 0.6) + 0.6);
        for (got, want) in h.data().iter().zip([0.6, 0.9, 1.05]) {
            assert!((got - want).abs() < 1e-15);
        }

        let (s, h) = lif1_dual(&Tensor::zeros(&[3, 2]), &p(1.0, 0.5)).unwrap();
        assert_eq!(s.spike_count(), 0);
        assert!(h.data().iter().all(|&v| v == 0.0));

        let (s, h) = lif1_dual(&Tensor::full(&[1, 1], 1.25), &p(1.25, 0.5)).unwrap();
        assert_eq!(s.as_tensor().data(), &[1.0]);
        assert_eq!(h.data(), &[1.25]);
    }

    #[test]
    fn topk_examples() {
        let x = Tensor::new(vec![4], vec![0.1, 0.9, 0.5, 0.5]).unwrap();
        assert_eq!(lif0_topk(&x, 50.0).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(lif0_topk(&x, 25.0).unwrap().data(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(lif0_topk(&x, 100.0).unwrap().data(), &[1.0; 4]);
        assert!(lif0_topk(&x, 0.0).is_err());
        assert!(lif0_topk(&x, 100.5).is_err());
        assert!(lif0_topk(&Tensor::new(vec![0], vec![]).unwrap(), 50.0).is_err());
    }

    #[test]
    fn spike_train_rejects_non_binary() {
        assert!(SpikeTrain::new(Tensor::full(&[2, 2], 0.5)).is_err());
        assert!(SpikeTrain::new(Tensor::ones(&[2])).is_err());
        assert_eq!(SpikeTrain::new(Tensor::ones(&[2, 3])).unwrap().neurons(), 3);
    }
}
