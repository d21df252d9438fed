//! Toy direct training: a three-layer spiking convolutional regressor that
//! predicts the box of the single object in a synthetic image.
//!
//! Both variants share the same architecture after the first layer:
//!
//! ```text
//! image -> [encoder] -> LIF -> conv/2 -> BN -> [attention] -> LIF -> conv/2 -> BN -> LIF -> mean_t -> linear
//! ```
//!
//! The baseline encoder repeats the stem Conv-BN feature at every step. The
//! enhanced encoder runs the spiking encoder recurrence, the second layer is
//! modulated by attention, and the temporal attention weights gate the
//! encoder coefficients after every step. Attention weights and coefficients
//! are treated as constants by the backward pass.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attention_forward, AttentionConfig, AttentionVariant};
use crate::autodiff::{SpikeMode, Tape, Var};
use crate::error::{Error, Result};
use crate::gating::attention_gate_update;
use crate::neuron::LifParams;
use crate::rng::stream;
use crate::synthetic::{self, Sample};
use crate::tensor::{BatchNorm, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    /// Size of the synthetic training set, cycled in order.
    pub samples: usize,
    pub image_size: usize,
    pub learning_rate: f64,
    /// Output channels of the three spiking layers.
    pub channels: [usize; 3],
    /// Window of the moving average used to compare losses.
    pub smoothing_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch: 4,
            samples: 64,
            image_size: 16,
            learning_rate: 0.01,
            channels: [4, 8, 8],
            smoothing_window: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::invalid("train config", format!("{field}: {reason}")))
        };
        if self.batch == 0 {
            return bad("batch", "must be at least 1");
        }
        if self.samples < self.batch {
            return bad("samples", "must be at least batch");
        }
        if self.image_size < 8 || !self.image_size.is_multiple_of(4) {
            return bad("image_size", "must be a multiple of 4 and at least 8");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.channels.contains(&0) {
            return bad("channels", "must be positive");
        }
        if self.smoothing_window == 0 {
            return bad("smoothing_window", "must be at least 1");
        }
        Ok(())
    }
}

/// Everything that selects one training run besides its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub seed: u64,
    pub time_steps: usize,
    pub lif: LifParams,
    pub mode: SpikeMode,
    /// `None` trains the direct-encoding baseline.
    pub enhanced: Option<Enhancement>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Enhancement {
    pub variant: AttentionVariant,
    pub alpha_init: f64,
    pub gating: bool,
    pub spatial_kernel: usize,
    pub k_percent: f64,
    pub attention_lif: LifParams,
}

/// Hand-rolled Adam state for one tensor.
#[derive(Clone, Debug)]
struct Param {
    value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub struct ToyModel {
    spec: RunSpec,
    cfg: TrainConfig,
    params: BTreeMap<String, Param>,
    norms: [BatchNorm; 3],
    calibrated: bool,
    attention: Option<AttentionConfig>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    adam_step: i32,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

impl ToyModel {
    /// Every parameter is drawn from its own named stream, so layers shared
    /// by both variants start from identical weights.
    pub fn new(spec: RunSpec, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        spec.lif.validate()?;
        if spec.time_steps == 0 {
            return Err(Error::invalid("train", "T must be at least 1"));
        }
        let [c1, c2, c3] = cfg.channels;
        let side = cfg.image_size / 4;
        let mut shapes: Vec<(String, Vec<usize>, usize)> = vec![
            ("stem.weight".into(), vec![c1, 1, 3, 3], 9),
            ("stem.bias".into(), vec![c1], 9),
            ("conv2.weight".into(), vec![c2, c1, 3, 3], c1 * 9),
            ("conv2.bias".into(), vec![c2], c1 * 9),
            ("conv3.weight".into(), vec![c3, c2, 3, 3], c2 * 9),
            ("conv3.bias".into(), vec![c3], c2 * 9),
            ("head.weight".into(), vec![4, c3 * side * side], c3 * side * side),
        ];
        if spec.enhanced.is_some() {
            for t in 0..spec.time_steps {
                shapes.push((format!("encoder.step{t}.weight"), vec![c1, c1, 3, 3], c1 * 9));
            }
        }
        let mut params = BTreeMap::new();
        for (name, shape, fan_in) in shapes {
            let mut rng = stream(spec.seed, &format!("toy/{name}"));
            let value = uniform(&shape, 1.0 / (fan_in as f64).sqrt(), &mut rng);
            params.insert(name, Param::new(value));
        }
        params.insert("head.bias".into(), Param::new(Tensor::full(&[4], 0.5)));
        for (i, c) in cfg.channels.iter().enumerate() {
            params.insert(format!("bn{}.gamma", i + 1), Param::new(Tensor::ones(&[*c])));
            params.insert(format!("bn{}.beta", i + 1), Param::new(Tensor::zeros(&[*c])));
        }

        let (attention, alpha) = match &spec.enhanced {
            Some(e) => {
                let attention = match e.variant {
                    AttentionVariant::None => None,
                    v => {
                        let mut rng = stream(spec.seed, "toy/attention");
                        let mut a = AttentionConfig::seeded(v, spec.time_steps, c2, e.spatial_kernel, &mut rng)?;
                        a.k_percent = e.k_percent;
                        a.lif1 = e.attention_lif;
                        Some(a)
                    }
                };
                if !(0.0..=1.0).contains(&e.alpha_init) {
                    return Err(Error::invalid("train", "alpha_init must lie in [0, 1]"));
                }
                (attention, vec![e.alpha_init; spec.time_steps])
            }
            None => (None, vec![1.0; spec.time_steps]),
        };
        Ok(Self {
            norms: [BatchNorm::new(c1), BatchNorm::new(c2), BatchNorm::new(c3)],
            calibrated: false,
            attention,
            alpha_bar: alpha.clone(),
            alpha,
            adam_step: 0,
            params,
            spec,
            cfg,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    fn norm(
        &mut self,
        tape: &mut Tape,
        leaves: &BTreeMap<String, Var>,
        layer: usize,
        x: Var,
    ) -> Result<Var> {
        if !self.calibrated {
            self.norms[layer].calibrate(tape.value(x))?;
        }
        let bn = &self.norms[layer];
        let gamma = leaves[&format!("bn{}.gamma", layer + 1)];
        let beta = leaves[&format!("bn{}.beta", layer + 1)];
        tape.batchnorm_eval(x, gamma, beta, &bn.running_mean, &bn.running_var, bn.eps)
    }

    /// Builds the batch graph. Returns the leaves, the loss and the temporal
    /// attention weights `[T, B]` when attention produced them.
    fn forward(&mut self, tape: &mut Tape, batch: &[&Sample]) -> Result<(BTreeMap<String, Var>, Var, Option<Tensor>)> {
        let leaves: BTreeMap<String, Var> = self
            .params
            .iter()
            .map(|(k, p)| (k.clone(), tape.leaf(p.value.clone())))
            .collect();
        let b = batch.len();
        let steps = self.spec.time_steps;
        let [c1, c2, c3] = self.cfg.channels;
        let n = self.cfg.image_size;
        let (mode, lif) = (self.spec.mode, self.spec.lif);

        let images = Tensor::stack(&batch.iter().map(|s| s.image.clone()).collect::<Vec<_>>())?;
        let x = tape.leaf(images);
        let stem = tape.conv2d(x, leaves["stem.weight"], Some(leaves["stem.bias"]), 1, 1)?;
        let f = self.norm(tape, &leaves, 0, stem)?;

        // layer 1 input per step, each [B*C1, n, n]
        let mut per_step = Vec::with_capacity(steps);
        let flat = |tape: &mut Tape, v: Var, c: usize, side: usize| tape.reshape(v, &[b * c, side, side]);
        if self.spec.enhanced.is_some() {
            let mut prev = f;
            for t in 0..steps {
                let conv = tape.conv2d(prev, leaves[&format!("encoder.step{t}.weight")], None, 1, 1)?;
                let keep = tape.scale(f, self.alpha[t]);
                let evolve = tape.scale(conv, 1.0 - self.alpha[t]);
                prev = tape.add(keep, evolve)?;
                per_step.push(flat(tape, prev, c1, n)?);
            }
        } else {
            let ff = flat(tape, f, c1, n)?;
            per_step = vec![ff; steps];
        }
        let a1 = tape.stack(&per_step)?;
        let s1 = tape.lif(a1, &lif, mode)?;
        let s1 = tape.reshape(s1, &[steps * b, c1, n, n])?;

        let conv2 = tape.conv2d(s1, leaves["conv2.weight"], Some(leaves["conv2.bias"]), 2, 1)?;
        let h2 = self.norm(tape, &leaves, 1, conv2)?;
        let h2 = tape.reshape(h2, &[steps, b * c2, n / 2, n / 2])?;
        let (h2, temporal) = match &self.attention {
            Some(cfg) => {
                let (bias, temporal) = attention_bias(tape.value(h2), cfg, b, c2)?;
                let bias = tape.leaf(bias);
                (tape.add(h2, bias)?, temporal)
            }
            None => (h2, None),
        };
        let s2 = tape.lif(h2, &lif, mode)?;
        let s2 = tape.reshape(s2, &[steps * b, c2, n / 2, n / 2])?;

        let conv3 = tape.conv2d(s2, leaves["conv3.weight"], Some(leaves["conv3.bias"]), 2, 1)?;
        let h3 = self.norm(tape, &leaves, 2, conv3)?;
        let h3 = tape.reshape(h3, &[steps, b * c3, n / 4, n / 4])?;
        let s3 = tape.lif(h3, &lif, mode)?;

        let mut rate = tape.select(s3, 0)?;
        for t in 1..steps {
            let st = tape.select(s3, t)?;
            rate = tape.add(rate, st)?;
        }
        let rate = tape.scale(rate, 1.0 / steps as f64);
        let rate = tape.reshape(rate, &[b, c3 * (n / 4) * (n / 4)])?;
        let mut preds = Vec::with_capacity(b);
        for i in 0..b {
            let r = tape.select(rate, i)?;
            preds.push(tape.linear(r, leaves["head.weight"], leaves["head.bias"])?);
        }
        let pred = tape.stack(&preds)?;
        let target = Tensor::new(
            vec![b, 4],
            batch.iter().flat_map(|s| s.target.to_array()).collect(),
        )?;
        let loss = tape.smooth_l1(pred, &target)?;
        self.calibrated = true;
        Ok((leaves, loss, temporal))
    }

    /// Loss on `batch` without updating anything but normalization
    /// statistics on the first call.
    pub fn loss(&mut self, batch: &[&Sample]) -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss, _) = self.forward(&mut tape, batch)?;
        Ok(tape.value(loss).data()[0])
    }

    /// One Adam update on `batch`; returns the loss before the update.
    pub fn step(&mut self, batch: &[&Sample]) -> Result<f64> {
        let mut tape = Tape::new();
        let (leaves, loss, temporal) = self.forward(&mut tape, batch)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "train" });
        }
        let grads = tape.backward(loss)?;
        self.adam_step += 1;
        let lr = self.cfg.learning_rate;
        let c1 = 1.0 - ADAM_BETA1.powi(self.adam_step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.adam_step);
        for (name, p) in &mut self.params {
            let Some(g) = grads.get(leaves[name]) else { continue };
            let data = p.value.data_mut();
            for (i, &gi) in g.data().iter().enumerate() {
                p.m[i] = ADAM_BETA1 * p.m[i] + (1.0 - ADAM_BETA1) * gi;
                p.v[i] = ADAM_BETA2 * p.v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                data[i] -= lr * (p.m[i] / c1) / ((p.v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
        if let (Some(g), Some(e)) = (temporal, &self.spec.enhanced) {
            if e.gating {
                self.alpha = attention_gate_update(&g, &mut self.alpha_bar)?;
            }
        }
        Ok(value)
    }
}

impl Param {
    fn new(value: Tensor) -> Self {
        let n = value.len();
        Self {
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Attention on each sample of `h: [T, B*C, H, W]`, returned as the additive
/// change `output - h` at the same layout, with the temporal weights `[T, B]`.
fn attention_bias(h: &Tensor, cfg: &AttentionConfig, b: usize, c: usize) -> Result<(Tensor, Option<Tensor>)> {
    let s = h.shape();
    let (steps, plane) = (s[0], s[2] * s[3]);
    let block = c * plane;
    let mut bias = vec![0.0; h.len()];
    let mut temporal = vec![0.0; steps * b];
    let mut have_temporal = true;
    for i in 0..b {
        let mut sample = vec![0.0; steps * block];
        for t in 0..steps {
            let src = t * b * block + i * block;
            sample[t * block..(t + 1) * block].copy_from_slice(&h.data()[src..src + block]);
        }
        let sample = Tensor::new(vec![steps, c, s[2], s[3]], sample)?;
        let out = attention_forward(&sample, cfg)?;
        for t in 0..steps {
            let dst = t * b * block + i * block;
            for k in 0..block {
                bias[dst + k] = out.output.data()[t * block + k] - sample.data()[t * block + k];
            }
        }
        match out.temporal_float {
            Some(g) => (0..steps).for_each(|t| temporal[t * b + i] = g.data()[t]),
            None => have_temporal = false,
        }
    }
    let temporal = if have_temporal {
        Some(Tensor::new(vec![steps, b], temporal)?)
    } else {
        None
    };
    Ok((Tensor::new(s.to_vec(), bias)?, temporal))
}

/// Loss per step, `curve[s]` measured with the parameters after `s` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct LossCurve {
    pub losses: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl LossCurve {
    /// Mean over the first and last `window` entries.
    pub fn smoothed_ends(&self, window: usize) -> (f64, f64) {
        let w = window.clamp(1, self.losses.len().max(1));
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&self.losses[..w]), mean(&self.losses[self.losses.len() - w..]))
    }
}

/// Trains for `cfg.steps` updates on the synthetic set of `spec.seed`.
pub fn train(spec: RunSpec, cfg: TrainConfig) -> Result<LossCurve> {
    let data = synthetic::batch(cfg.samples, cfg.image_size, cfg.image_size, spec.seed)?;
    let mut model = ToyModel::new(spec, cfg.clone())?;
    let per_epoch = cfg.samples / cfg.batch;
    let batch_at = |s: usize| -> Vec<&Sample> {
        let start = (s % per_epoch) * cfg.batch;
        data[start..start + cfg.batch].iter().collect()
    };
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for s in 0..cfg.steps {
        losses.push(model.step(&batch_at(s))?);
    }
    losses.push(model.loss(&batch_at(cfg.steps))?);
    Ok(LossCurve {
        losses,
        alpha: model.alpha.clone(),
    })
}

pub const LOSS_HEADER: &str = "step,tde,baseline";

/// Writes `step,tde,baseline` rows; both curves must have equal length.
pub fn write_loss_csv(tde: &LossCurve, baseline: &LossCurve, mut out: impl Write) -> Result<()> {
    if tde.losses.len() != baseline.losses.len() {
        return Err(Error::invalid("loss csv", "curves differ in length"));
    }
    let mut text = format!("{LOSS_HEADER}\n");
    for (s, (a, b)) in tde.losses.iter().zip(&baseline.losses).enumerate() {
        text.push_str(&format!("{s},{a},{b}\n"));
    }
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("loss csv", e))
}
