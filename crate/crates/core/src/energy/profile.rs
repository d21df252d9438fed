use super::ledger::{measure, EnergyLedger};
use crate::attention::{attention_forward, AttentionConfig, AttentionVariant, LEDGER_TAG};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, stream};
use crate::tensor::Tensor;

/// Membrane shape used for the reference energy comparison: `T=4, C=128, H=80, W=40`.
pub const PAPER_SHAPE: [usize; 4] = [4, 128, 80, 40];

/// Runs attention on `h` and returns the ledger restricted to the attention tag.
pub fn profile_attention_on(h: &Tensor, cfg: &AttentionConfig) -> Result<EnergyLedger> {
    let (out, ledger) = measure(|| attention_forward(h, cfg));
    out?;
    let mut only = EnergyLedger::new();
    only.record(LEDGER_TAG, ledger.tag(LEDGER_TAG));
    Ok(only)
}

/// Profiles one attention variant on a seeded standard-normal membrane tensor
/// of `shape`, with seeded maps and the default spatial kernel.
pub fn profile_attention(
    variant: AttentionVariant,
    shape: [usize; 4],
    seed: u64,
) -> Result<EnergyLedger> {
    if variant == AttentionVariant::None {
        return Err(Error::invalid("profile_attention", "variant must be tcsa or sda"));
    }
    if shape.contains(&0) {
        return Err(Error::invalid("profile_attention", format!("empty shape {shape:?}")));
    }
    let cfg = AttentionConfig::seeded(
        variant,
        shape[0],
        shape[1],
        AttentionConfig::DEFAULT_SPATIAL_KERNEL,
        &mut stream(seed, "attention"),
    )?;
    let h = normal_tensor(&shape, &mut stream(seed, "membrane"));
    profile_attention_on(&h, &cfg)
}
