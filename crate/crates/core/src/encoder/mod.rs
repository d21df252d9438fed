//! Input pathways: event accumulation, direct encoding and the spiking
//! encoder recurrence.
//!
//! The spiking encoder extracts a stem feature `F = BN(conv(I))` once and
//! then evolves it over time:
//!
//! ```text
//! A_0 = F
//! A_t = α_t F + (1 - α_t) conv_t(A_{t-1}),   t = 1..T
//! ```
//!
//! `A_1..A_T` drive a LIF population. With every `α_t = 1` this collapses to
//! direct encoding, where `F` is repeated unchanged at every step.

mod events;

pub use events::{
    accumulate_events, load_events, read_events_bin, read_events_csv, write_events_bin,
    write_events_csv, write_frame_csv, Event, EventFormat, BINARY_RECORD_LEN,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{lif_forward, LifParams, SpikeTrain};
use crate::tensor::{broadcast_combine, conv2d, BatchNorm, CombineOp, ConvSpec, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Stem output channels.
    pub channels: usize,
    /// Kernel size of the per-step convolutions.
    pub kernel_size: usize,
    /// Independent per-step weights; when false one convolution is shared.
    pub per_step_weights: bool,
    pub alpha_init: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            kernel_size: 3,
            per_step_weights: true,
            alpha_init: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    /// Preference coefficients used by the next forward pass.
    pub alpha: Vec<f64>,
    /// Smoothed coefficients carried between batches by the gate.
    pub alpha_bar: Vec<f64>,
    pub stem: ConvSpec,
    pub stem_bn: BatchNorm,
    pub per_step: Vec<ConvSpec>,
}

impl EncoderState {
    pub fn seeded(
        in_channels: usize,
        time_steps: usize,
        cfg: &EncoderConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if time_steps == 0 {
            return Err(Error::invalid("encoder", "T must be at least 1"));
        }
        if cfg.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(
                "encoder",
                format!("kernel_size must be odd, got {}", cfg.kernel_size),
            ));
        }
        let stem = ConvSpec::same(in_channels, cfg.channels, 3, rng)?;
        let per_step = if cfg.per_step_weights {
            (0..time_steps)
                .map(|_| ConvSpec::same(cfg.channels, cfg.channels, cfg.kernel_size, rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![ConvSpec::same(cfg.channels, cfg.channels, cfg.kernel_size, rng)?; time_steps]
        };
        let state = Self {
            alpha: vec![cfg.alpha_init; time_steps],
            alpha_bar: vec![cfg.alpha_init; time_steps],
            stem,
            stem_bn: BatchNorm::new(cfg.channels),
            per_step,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn time_steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.alpha.len();
        if t == 0 || self.alpha_bar.len() != t || self.per_step.len() != t {
            return Err(Error::invalid(
                "encoder",
                format!(
                    "alpha ({}), alpha_bar ({}) and per-step convs ({}) must share one length T >= 1",
                    t,
                    self.alpha_bar.len(),
                    self.per_step.len()
                ),
            ));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid("encoder", format!("alpha {a} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha.iter_mut().for_each(|a| *a = alpha);
        self.alpha_bar.iter_mut().for_each(|a| *a = alpha);
    }

    /// Sets the stem normalization statistics from the stem convolution of
    /// `images` (each `[C_in, H, W]`).
    pub fn calibrate(&mut self, images: &[Tensor]) -> Result<()> {
        if images.is_empty() {
            return Err(Error::Empty { op: "encoder calibration" });
        }
        let convs = images
            .iter()
            .map(|x| {
                if x.rank() != 3 || x.shape()[0] != self.stem.in_channels {
                    return Err(Error::shape("calibrate", x.shape(), self.stem.weights.shape()));
                }
                conv2d(x, &self.stem)
            })
            .collect::<Result<Vec<_>>>()?;
        self.stem_bn.calibrate(&Tensor::stack(&convs)?)
    }

    /// Stem Conv-BN feature `F` (eval-mode normalization).
    pub fn stem_features(&self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 3 || input.shape()[0] != self.stem.in_channels {
            return Err(Error::shape("se_encode", input.shape(), self.stem.weights.shape()));
        }
        self.stem_bn.eval(&conv2d(input, &self.stem)?)
    }
}

/// Repeats `image` at each of `time_steps` steps: `[C, H, W] -> [T, C, H, W]`.
pub fn direct_encode(image: &Tensor, time_steps: usize) -> Result<Tensor> {
    if time_steps == 0 {
        return Err(Error::invalid("direct_encode", "T must be at least 1"));
    }
    Tensor::stack(&vec![image.clone(); time_steps])
}

/// The spiking encoder recurrence applied to a stem feature `F: [C, H, W]`.
/// Returns `A_1..A_T` stacked as `[T, C, H, W]`.
pub fn se_features(stem_out: &Tensor, state: &EncoderState) -> Result<Tensor> {
    state.validate()?;
    if stem_out.rank() != 3 {
        return Err(Error::invalid(
            "se_features",
            format!("expected [C, H, W], got {:?}", stem_out.shape()),
        ));
    }
    for spec in &state.per_step {
        if !spec.preserves_shape() || spec.in_channels != stem_out.shape()[0] {
            return Err(Error::shape("se_features", stem_out.shape(), spec.weights.shape()));
        }
    }
    let mut steps = Vec::with_capacity(state.time_steps());
    let mut prev = stem_out.clone();
    for (alpha, spec) in state.alpha.iter().zip(&state.per_step) {
        let evolved = conv2d(&prev, spec)?;
        let a = broadcast_combine(
            &stem_out.scale(*alpha),
            &evolved.scale(1.0 - alpha),
            CombineOp::Add,
        )?;
        steps.push(a.clone());
        prev = a;
    }
    Tensor::stack(&steps)
}

/// `S = LIF(SE(ConvBN(input)))`.
pub fn se_encode(input: &Tensor, state: &EncoderState, p: &LifParams) -> Result<SpikeTrain> {
    let features = se_features(&state.stem_features(input)?, state)?;
    lif_forward(&features, p, None)
}

/// Baseline: the stem feature repeated at every step, then LIF.
pub fn direct_spikes(input: &Tensor, state: &EncoderState, p: &LifParams) -> Result<SpikeTrain> {
    let features = direct_encode(&state.stem_features(input)?, state.time_steps())?;
    lif_forward(&features, p, None)
}
