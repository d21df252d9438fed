//! Multi-dimensional attention over a membrane tensor `H: [T, C, H, W]`.
//!
//! Two implementations share one set of per-dimension maps:
//!
//! * `Tcsa`: float gates. For temporal, then channel, then spatial: squeeze
//!   `H` by max-pooling over the other axes, apply the dimension's map, squash
//!   with a sigmoid and rescale `H` by the gate (`H <- g ∘ H`).
//! * `Sda`: spike-driven. Each dimension yields a binary mask and a float
//!   weight from a LIF⁰ (top-k) / map / LIF¹ chain, and the three pairs are
//!   fused additively so that every product has at least two binary factors:
//!
//! ```text
//! H_att = s_t f_c s_s + s_c f_s s_t + s_s f_t s_c + H
//! ```
//!
//! The SDA path performs no float-by-float multiplications.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::ledger;
use crate::error::{Error, Result};
use crate::neuron::{lif0_topk, lif1_dual, LifParams};
use crate::tensor::{
    broadcast_combine, conv2d, linear, maxpool_over, CombineOp, ConvSpec, LinearSpec, Tensor,
};

pub const LEDGER_TAG: &str = "attention";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionVariant {
    None,
    Tcsa,
    Sda,
}

impl AttentionVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Tcsa => "tcsa",
            Self::Sda => "sda",
        }
    }
}

impl std::fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AttentionVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "tcsa" => Ok(Self::Tcsa),
            "sda" => Ok(Self::Sda),
            other => Err(format!("unknown attention variant {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Temporal,
    Channel,
    Spatial,
}

impl Dim {
    pub const ALL: [Dim; 3] = [Dim::Temporal, Dim::Channel, Dim::Spatial];

    /// Axes max-pooled away when squeezing onto this dimension.
    fn pooled_axes(self) -> &'static [usize] {
        match self {
            Dim::Temporal => &[1, 2, 3],
            Dim::Channel => &[0, 2, 3],
            Dim::Spatial => &[0, 1],
        }
    }

    /// Shape of this dimension's weights for a `[T, C, H, W]` input.
    pub fn weight_shape(self, shape: &[usize]) -> [usize; 4] {
        match self {
            Dim::Temporal => [shape[0], 1, 1, 1],
            Dim::Channel => [1, shape[1], 1, 1],
            Dim::Spatial => [1, 1, shape[2], shape[3]],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    pub variant: AttentionVariant,
    /// `T -> T`
    pub temporal_map: LinearSpec,
    /// `C -> C`
    pub channel_map: LinearSpec,
    /// Single-channel `k_s x k_s` convolution over the squeezed plane.
    pub spatial_map: ConvSpec,
    pub k_percent: f64,
    pub lif1: LifParams,
}

impl AttentionConfig {
    pub const DEFAULT_SPATIAL_KERNEL: usize = 7;
    pub const DEFAULT_K_PERCENT: f64 = 50.0;

    pub fn seeded(
        variant: AttentionVariant,
        time_steps: usize,
        channels: usize,
        spatial_kernel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if spatial_kernel.is_multiple_of(2) {
            return Err(Error::invalid(
                "attention",
                format!("spatial kernel must be odd, got {spatial_kernel}"),
            ));
        }
        Ok(Self {
            variant,
            temporal_map: LinearSpec::seeded(time_steps, time_steps, rng)?,
            channel_map: LinearSpec::seeded(channels, channels, rng)?,
            spatial_map: ConvSpec::same(1, 1, spatial_kernel, rng)?,
            k_percent: Self::DEFAULT_K_PERCENT,
            lif1: LifParams::default(),
        })
    }

    fn check(&self, h: &Tensor) -> Result<()> {
        if h.rank() != 4 {
            return Err(Error::invalid(
                "attention",
                format!("expected [T, C, H, W], got {:?}", h.shape()),
            ));
        }
        let (t, c) = (h.shape()[0], h.shape()[1]);
        if self.temporal_map.inputs() != t || self.temporal_map.outputs() != t {
            return Err(Error::shape("attention", h.shape(), self.temporal_map.weights.shape()));
        }
        if self.channel_map.inputs() != c || self.channel_map.outputs() != c {
            return Err(Error::shape("attention", h.shape(), self.channel_map.weights.shape()));
        }
        if self.spatial_map.in_channels != 1
            || self.spatial_map.out_channels != 1
            || !self.spatial_map.preserves_shape()
        {
            return Err(Error::shape("attention", h.shape(), self.spatial_map.weights.shape()));
        }
        Ok(())
    }

    /// Applies the dimension's map to a squeezed tensor, keeping its shape.
    fn map(&self, dim: Dim, squeezed: &Tensor) -> Result<Tensor> {
        let shape = squeezed.shape().to_vec();
        let out = match dim {
            Dim::Temporal => linear(squeezed, &self.temporal_map)?,
            Dim::Channel => linear(squeezed, &self.channel_map)?,
            Dim::Spatial => {
                let plane = squeezed.clone().reshape(&[1, shape[2], shape[3]])?;
                let plane = if squeezed.is_binary() {
                    plane.binary_unchecked()
                } else {
                    plane
                };
                conv2d(&plane, &self.spatial_map)?
            }
        };
        out.reshape(&shape)
    }
}

fn squeeze(h: &Tensor, dim: Dim) -> Result<Tensor> {
    maxpool_over(h, dim.pooled_axes())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Float gates produced by the TCSA path, in application order.
#[derive(Clone, Debug, PartialEq)]
pub struct TcsaGates {
    pub temporal: Tensor,
    pub channel: Tensor,
    pub spatial: Tensor,
}

/// Sequential temporal, channel and spatial gating: `H <- σ(map(squeeze(H))) ∘ H`.
pub fn tcsa_apply(h: &Tensor, cfg: &AttentionConfig) -> Result<(Tensor, TcsaGates)> {
    cfg.check(h)?;
    let mut out = h.clone().into_float();
    let mut gates = Vec::with_capacity(3);
    for dim in Dim::ALL {
        let g = cfg.map(dim, &squeeze(&out, dim)?)?.map(sigmoid);
        out = broadcast_combine(&g, &out, CombineOp::Mul)?;
        gates.push(g);
    }
    let spatial = gates.pop().expect("three gates");
    let channel = gates.pop().expect("three gates");
    let temporal = gates.pop().expect("three gates");
    Ok((
        out,
        TcsaGates {
            temporal,
            channel,
            spatial,
        },
    ))
}

/// Spike mask and float weight for one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DimWeights {
    pub spike: Tensor,
    pub float: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub temporal: DimWeights,
    pub channel: DimWeights,
    pub spatial: DimWeights,
}

impl AttentionWeights {
    pub fn get(&self, dim: Dim) -> &DimWeights {
        match dim {
            Dim::Temporal => &self.temporal,
            Dim::Channel => &self.channel,
            Dim::Spatial => &self.spatial,
        }
    }

    fn validate(&self, shape: &[usize]) -> Result<()> {
        for dim in Dim::ALL {
            let w = self.get(dim);
            let want = dim.weight_shape(shape);
            for t in [&w.spike, &w.float] {
                if t.shape() != want {
                    return Err(Error::shape("sda_fuse", &want, t.shape()));
                }
            }
            if !w.spike.is_binary() {
                return Err(Error::invalid(
                    "sda_fuse",
                    format!("{dim:?} spike weights are not flagged binary"),
                ));
            }
            w.float.ensure_finite("sda_fuse")?;
        }
        Ok(())
    }
}

/// LIF⁰ → map → LIF¹ for one dimension.
///
/// The LIF⁰ group fires the top-k% of the squeezed stimuli; units whose
/// stimulus is not positive stay silent. The map sees only spikes, so it costs
/// accumulates only. LIF¹ runs over the leading axis of the mapped tensor
/// (T steps for the temporal dimension, one step otherwise); the float weight
/// is the sigmoid of its pre-reset membrane potential.
pub fn sda_dim_weights(h: &Tensor, dim: Dim, cfg: &AttentionConfig) -> Result<DimWeights> {
    cfg.check(h)?;
    let squeezed = squeeze(h, dim)?;
    let mut mask = lif0_topk(&squeezed, cfg.k_percent)?.into_float();
    for (m, &s) in mask.data_mut().iter_mut().zip(squeezed.data()) {
        if s <= 0.0 {
            *m = 0.0;
        }
    }
    let mask = mask.binary_unchecked();
    let mapped = cfg.map(dim, &mask)?;
    let (spikes, membrane) = lif1_dual(&mapped, &cfg.lif1)?;
    Ok(DimWeights {
        spike: spikes.into_tensor(),
        float: membrane.map(sigmoid),
    })
}

pub fn sda_weights(h: &Tensor, cfg: &AttentionConfig) -> Result<AttentionWeights> {
    Ok(AttentionWeights {
        temporal: sda_dim_weights(h, Dim::Temporal, cfg)?,
        channel: sda_dim_weights(h, Dim::Channel, cfg)?,
        spatial: sda_dim_weights(h, Dim::Spatial, cfg)?,
    })
}

/// Additive cross fusion of the three dimensions plus the residual `H`.
pub fn sda_fuse(h: &Tensor, w: &AttentionWeights) -> Result<Tensor> {
    if h.rank() != 4 {
        return Err(Error::invalid(
            "sda_fuse",
            format!("expected [T, C, H, W], got {:?}", h.shape()),
        ));
    }
    w.validate(h.shape())?;
    let (t, c, s) = (&w.temporal, &w.channel, &w.spatial);
    let mul = |a: &Tensor, b: &Tensor| broadcast_combine(a, b, CombineOp::Mul);
    let add = |a: &Tensor, b: &Tensor| broadcast_combine(a, b, CombineOp::Add);

    let tcs = mul(&mul(&t.spike, &c.float)?, &s.spike)?;
    let cst = mul(&mul(&c.spike, &s.float)?, &t.spike)?;
    let stc = mul(&mul(&s.spike, &t.float)?, &c.spike)?;
    let g = add(&add(&tcs, &cst)?, &stc)?;
    add(&g, &h.clone().into_float())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub output: Tensor,
    /// Per-dimension spike/float weights (SDA only).
    pub weights: Option<AttentionWeights>,
    /// Temporal float weights `[T, 1, 1, 1]`, when the variant produces them.
    pub temporal_float: Option<Tensor>,
}

/// Dispatches on the configured variant. Work is attributed to the
/// `attention` ledger tag.
pub fn attention_forward(h: &Tensor, cfg: &AttentionConfig) -> Result<AttentionOutput> {
    ledger::with_tag(LEDGER_TAG, || match cfg.variant {
        AttentionVariant::None => Ok(AttentionOutput {
            output: h.clone(),
            weights: None,
            temporal_float: None,
        }),
        AttentionVariant::Tcsa => {
            let (output, gates) = tcsa_apply(h, cfg)?;
            Ok(AttentionOutput {
                output,
                weights: None,
                temporal_float: Some(gates.temporal),
            })
        }
        AttentionVariant::Sda => {
            let weights = sda_weights(h, cfg)?;
            let output = sda_fuse(h, &weights)?;
            Ok(AttentionOutput {
                output,
                temporal_float: Some(weights.temporal.float.clone()),
                weights: Some(weights),
            })
        }
    })
}
