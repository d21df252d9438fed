//! Run configuration: one versioned JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionConfig, AttentionVariant};
use crate::autodiff::SpikeMode;
use crate::diversity::MAX_PATTERN_STEPS;
use crate::encoder::{EncoderConfig, EventFormat};
use crate::gating::TdeSettings;
use crate::neuron::LifParams;
use crate::train::{Enhancement, RunSpec, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "TDE_SNN_SEED";

/// Number of spiking layers a run exposes to the diversity analysis.
pub const SPIKING_LAYERS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventInput {
    pub path: PathBuf,
    pub format: EventFormat,
    /// Half-open `[start, end)` timestamp window; all events when absent.
    #[serde(default)]
    pub window: Option<[u64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    pub height: usize,
    pub width: usize,
    /// Images per batch; one batch per round.
    pub batch: usize,
    /// Accumulated event frame used instead of synthetic images.
    pub events: Option<EventInput>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            batch: 4,
            events: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionSettings {
    pub variant: AttentionVariant,
    pub spatial_kernel: usize,
    pub k_percent: f64,
    /// Parameters of the attention neuron groups.
    pub neuron: LifParams,
}

impl Default for AttentionSettings {
    fn default() -> Self {
        Self {
            variant: AttentionVariant::Sda,
            spatial_kernel: AttentionConfig::DEFAULT_SPATIAL_KERNEL,
            k_percent: AttentionConfig::DEFAULT_K_PERCENT,
            neuron: LifParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Must be present and equal to [`SCHEMA_VERSION`].
    #[serde(default)]
    pub schema: Option<u32>,
    pub seed: u64,
    pub time_steps: usize,
    pub input: InputConfig,
    pub neuron: LifParams,
    pub encoder: EncoderConfig,
    pub layer_channels: usize,
    pub attention: AttentionSettings,
    /// Feed temporal attention back into the encoder between batches.
    pub gating: bool,
    /// Run direct encoding without attention instead of the enhanced block.
    pub baseline: bool,
    pub rounds: usize,
    /// Spiking layer written by `simulate` (0 = encoder).
    pub layer: usize,
    /// Forward mode of toy training; simulation always emits hard spikes.
    pub mode: SpikeMode,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema: Some(SCHEMA_VERSION),
            seed: 42,
            time_steps: 4,
            input: InputConfig::default(),
            neuron: LifParams::default(),
            encoder: EncoderConfig::default(),
            layer_channels: 8,
            attention: AttentionSettings::default(),
            gating: true,
            baseline: false,
            rounds: 3,
            layer: 0,
            mode: SpikeMode::Spiking,
            train: TrainConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses `text`, applies the seed override from `seed_env` and validates.
    pub fn parse(text: &str, seed_env: Option<&str>) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if let Some(raw) = seed_env {
            cfg.seed = raw
                .trim()
                .parse()
                .map_err(|_| invalid(SEED_ENV, format!("expected an unsigned 64-bit integer, got {raw:?}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, honoring the `TDE_SNN_SEED` override.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let env = std::env::var(SEED_ENV).ok();
        Self::parse(&text, env.as_deref())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.schema {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(invalid("schema", format!("unsupported version {v} (expected {SCHEMA_VERSION})"))),
            None => return Err(invalid("schema", format!("missing (expected {SCHEMA_VERSION})"))),
        }
        if !(1..=MAX_PATTERN_STEPS).contains(&self.time_steps) {
            return Err(invalid("time_steps", format!("must lie in 1..={MAX_PATTERN_STEPS}, got {}", self.time_steps)));
        }
        let i = &self.input;
        if i.height < 4 || i.width < 4 {
            return Err(invalid("input", format!("height and width must be at least 4, got {}x{}", i.height, i.width)));
        }
        if i.batch == 0 {
            return Err(invalid("input.batch", "must be at least 1"));
        }
        if let Some(ev) = &i.events {
            if let Some([a, b]) = ev.window {
                if a >= b {
                    return Err(invalid("input.events.window", format!("start {a} must be below end {b}")));
                }
            }
        }
        self.neuron
            .validate()
            .map_err(|e| invalid("neuron", e.to_string()))?;
        self.attention
            .neuron
            .validate()
            .map_err(|e| invalid("attention.neuron", e.to_string()))?;
        let e = &self.encoder;
        if e.channels == 0 {
            return Err(invalid("encoder.channels", "must be at least 1"));
        }
        if e.kernel_size.is_multiple_of(2) {
            return Err(invalid("encoder.kernel_size", format!("must be odd, got {}", e.kernel_size)));
        }
        if !(0.0..=1.0).contains(&e.alpha_init) {
            return Err(invalid("encoder.alpha_init", format!("must lie in [0, 1], got {}", e.alpha_init)));
        }
        if self.layer_channels == 0 {
            return Err(invalid("layer_channels", "must be at least 1"));
        }
        let a = &self.attention;
        if a.spatial_kernel.is_multiple_of(2) {
            return Err(invalid("attention.spatial_kernel", format!("must be odd, got {}", a.spatial_kernel)));
        }
        if !(a.k_percent > 0.0 && a.k_percent <= 100.0) {
            return Err(invalid("attention.k_percent", format!("must lie in (0, 100], got {}", a.k_percent)));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        if self.layer >= SPIKING_LAYERS {
            return Err(invalid("layer", format!("must be below {SPIKING_LAYERS}, got {}", self.layer)));
        }
        self.train.validate().map_err(|e| invalid("train", e.to_string()))
    }

    pub fn tde_settings(&self) -> TdeSettings {
        TdeSettings {
            in_channels: 1,
            time_steps: self.time_steps,
            encoder: self.encoder.clone(),
            layer_channels: self.layer_channels,
            variant: self.attention.variant,
            spatial_kernel: self.attention.spatial_kernel,
            k_percent: self.attention.k_percent,
            attention_lif: self.attention.neuron,
            lif: self.neuron,
        }
    }

    /// Toy training run; `enhanced` selects the encoder and attention path.
    pub fn run_spec(&self, enhanced: bool) -> RunSpec {
        RunSpec {
            seed: self.seed,
            time_steps: self.time_steps,
            lif: self.neuron,
            mode: self.mode,
            enhanced: enhanced.then_some(Enhancement {
                variant: self.attention.variant,
                alpha_init: self.encoder.alpha_init,
                gating: self.gating,
                spatial_kernel: self.attention.spatial_kernel,
                k_percent: self.attention.k_percent,
                attention_lif: self.attention.neuron,
            }),
        }
    }
}
