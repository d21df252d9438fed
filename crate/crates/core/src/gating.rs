//! Attention gating and the assembled TDE block.
//!
//! After each batch the temporal float attention weights are averaged over
//! the batch and blended with the carried coefficients:
//!
//! ```text
//! â_t = mean_b g[t, b]
//! α_t = (ᾱ_t + â_t) / 2,   ᾱ_t <- α_t
//! ```
//!
//! The new `α` drives the spiking encoder of the next batch.

use rand::Rng;

use crate::attention::{attention_forward, AttentionConfig, AttentionVariant};
use crate::diversity::{train_histogram, PatternHistogram};
use crate::encoder::{direct_spikes, se_encode, EncoderConfig, EncoderState};
use crate::energy::{measure, EnergyLedger};
use crate::error::{Error, Result};
use crate::neuron::{lif_forward, LifParams, SpikeTrain};
use crate::tensor::{conv2d, BatchNorm, ConvSpec, Tensor};

/// One gating update from per-sample temporal weights `g_float: [T, B]`.
/// Writes the new coefficients into `alpha_bar` and returns them.
pub fn attention_gate_update(g_float: &Tensor, alpha_bar: &mut [f64]) -> Result<Vec<f64>> {
    let s = g_float.shape();
    if s.len() != 2 || s[0] != alpha_bar.len() {
        return Err(Error::shape("attention_gate_update", &[alpha_bar.len()], s));
    }
    let batch = s[1];
    if batch == 0 {
        return Err(Error::invalid("attention_gate_update", "batch size must be at least 1"));
    }
    if let Some(v) = g_float.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(
            "attention_gate_update",
            format!("attention weight {v} outside [0, 1]"),
        ));
    }
    for (t, bar) in alpha_bar.iter_mut().enumerate() {
        let row = &g_float.data()[t * batch..(t + 1) * batch];
        let batch_mean = row.iter().sum::<f64>() / batch as f64;
        *bar = 0.5 * (*bar + batch_mean);
    }
    Ok(alpha_bar.to_vec())
}

/// Which encoder feeds the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pathway {
    /// Spiking encoder recurrence followed by attention.
    Enhanced,
    /// Direct encoding without attention.
    Direct,
}

/// Encoder, first post-encoder spiking layer and its attention block.
#[derive(Clone, Debug, PartialEq)]
pub struct TdeBlock {
    pub encoder: EncoderState,
    pub layer: ConvSpec,
    pub layer_bn: BatchNorm,
    pub attention: AttentionConfig,
    pub lif: LifParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdeSettings {
    pub in_channels: usize,
    pub time_steps: usize,
    pub encoder: EncoderConfig,
    pub layer_channels: usize,
    pub variant: AttentionVariant,
    pub spatial_kernel: usize,
    pub k_percent: f64,
    pub attention_lif: LifParams,
    pub lif: LifParams,
}

impl TdeBlock {
    pub fn seeded(settings: &TdeSettings, rng: &mut impl Rng) -> Result<Self> {
        settings.lif.validate()?;
        settings.attention_lif.validate()?;
        let encoder =
            EncoderState::seeded(settings.in_channels, settings.time_steps, &settings.encoder, rng)?;
        let layer = ConvSpec::same(settings.encoder.channels, settings.layer_channels, 3, rng)?;
        let mut attention = AttentionConfig::seeded(
            settings.variant,
            settings.time_steps,
            settings.layer_channels,
            settings.spatial_kernel,
            rng,
        )?;
        attention.k_percent = settings.k_percent;
        attention.lif1 = settings.attention_lif;
        Ok(Self {
            encoder,
            layer_bn: BatchNorm::new(settings.layer_channels),
            layer,
            attention,
            lif: settings.lif,
        })
    }

    /// Calibrates the stem and layer normalization statistics on `images`:
    /// the stem on its convolution outputs, then the layer on the convolved
    /// encoder spikes of `pathway`.
    pub fn calibrate(&mut self, images: &[Tensor], pathway: Pathway) -> Result<()> {
        self.encoder.calibrate(images)?;
        let mut convs = Vec::new();
        for x in images {
            let spikes = match pathway {
                Pathway::Enhanced => se_encode(x, &self.encoder, &self.lif)?,
                Pathway::Direct => direct_spikes(x, &self.encoder, &self.lif)?,
            };
            let out = conv2d(spikes.as_tensor(), &self.layer)?;
            for t in 0..out.shape()[0] {
                convs.push(out.slice_leading(t)?);
            }
        }
        self.layer_bn.calibrate(&Tensor::stack(&convs)?)
    }

    /// Conv-BN of the layer over each time step of the encoder spikes.
    fn membrane(&self, spikes: &SpikeTrain) -> Result<Tensor> {
        self.layer_bn.eval(&conv2d(spikes.as_tensor(), &self.layer)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput {
    /// Spikes of the encoder (first) LIF layer.
    pub encoder_spikes: SpikeTrain,
    /// Attention-modulated input of the second LIF layer.
    pub membrane: Tensor,
    pub spikes: SpikeTrain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub ledger: EnergyLedger,
    /// One histogram per LIF layer, encoder first.
    pub histograms: Vec<PatternHistogram>,
    /// Coefficients used by this pass.
    pub alpha_used: Vec<f64>,
    /// Coefficients for the next pass (equal to `alpha_used` unless gated).
    pub alpha_next: Vec<f64>,
    /// Temporal float weights `[T, B]`, when the variant produces them.
    pub temporal_weights: Option<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdeOutput {
    pub samples: Vec<SampleOutput>,
    pub diagnostics: Diagnostics,
}

/// Encoder and output layer histograms merged over `samples`.
pub fn layer_histograms(samples: &[SampleOutput], steps: usize) -> Result<Vec<PatternHistogram>> {
    let mut enc = PatternHistogram::empty(steps);
    let mut out = PatternHistogram::empty(steps);
    for s in samples {
        enc.merge(&train_histogram(&s.encoder_spikes)?)?;
        out.merge(&train_histogram(&s.spikes)?)?;
    }
    Ok(vec![enc, out])
}

/// Spiking encoder, first layer and attention over one batch of `[C, H, W]`
/// inputs. With `train` set, the temporal attention weights update the
/// encoder's coefficients for the next batch.
pub fn tde_forward(block: &mut TdeBlock, batch: &[Tensor], train: bool) -> Result<TdeOutput> {
    if batch.is_empty() {
        return Err(Error::invalid("tde_forward", "empty batch"));
    }
    let alpha_used = block.encoder.alpha.clone();
    let steps = block.encoder.time_steps();
    let (result, ledger) = measure(|| -> Result<_> {
        let mut samples = Vec::with_capacity(batch.len());
        let mut temporal = Vec::new();
        for x in batch {
            let encoder_spikes = se_encode(x, &block.encoder, &block.lif)?;
            let h = block.membrane(&encoder_spikes)?;
            let att = attention_forward(&h, &block.attention)?;
            let spikes = lif_forward(&att.output, &block.lif, None)?;
            if let Some(g) = att.temporal_float {
                temporal.push(g);
            }
            samples.push(SampleOutput {
                encoder_spikes,
                membrane: att.output,
                spikes,
            });
        }
        Ok((samples, temporal))
    });
    let (samples, temporal) = result?;

    let temporal_weights = if temporal.len() == batch.len() {
        let b = batch.len();
        let mut g = vec![0.0; steps * b];
        for (j, w) in temporal.iter().enumerate() {
            for t in 0..steps {
                g[t * b + j] = w.data()[t];
            }
        }
        Some(Tensor::new(vec![steps, b], g)?)
    } else {
        None
    };
    if train {
        if let Some(g) = &temporal_weights {
            let alpha = attention_gate_update(g, &mut block.encoder.alpha_bar)?;
            block.encoder.alpha = alpha;
        }
    }
    Ok(TdeOutput {
        diagnostics: Diagnostics {
            ledger,
            histograms: layer_histograms(&samples, steps)?,
            alpha_used,
            alpha_next: block.encoder.alpha.clone(),
            temporal_weights,
        },
        samples,
    })
}

/// Direct encoding, LIF, then the same first layer without attention.
pub fn baseline_forward(block: &TdeBlock, batch: &[Tensor]) -> Result<Vec<SampleOutput>> {
    batch
        .iter()
        .map(|x| {
            let encoder_spikes = direct_spikes(x, &block.encoder, &block.lif)?;
            let membrane = block.membrane(&encoder_spikes)?;
            let spikes = lif_forward(&membrane, &block.lif, None)?;
            Ok(SampleOutput {
                encoder_spikes,
                membrane,
                spikes,
            })
        })
        .collect()
}

pub fn baseline_histograms(block: &TdeBlock, batch: &[Tensor]) -> Result<Vec<PatternHistogram>> {
    layer_histograms(&baseline_forward(block, batch)?, block.encoder.time_steps())
}
