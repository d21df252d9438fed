//! Seeded random streams.
//!
//! All randomness derives from one 64-bit seed. Each consumer asks for a
//! stream by label: the generator is ChaCha8 keyed by the seed (expanded via
//! `seed_from_u64`), with the ChaCha stream id set to the 64-bit FNV-1a hash
//! of the label. ChaCha is counter based, so streams for different labels
//! are independent and a given `(seed, label)` pair always yields the same
//! sequence on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

pub type SimRng = ChaCha8Rng;

pub fn label_id(label: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    label
        .bytes()
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// The random stream named `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label_id(label));
    rng
}

pub fn normal_tensor(shape: &[usize], rng: &mut SimRng) -> Tensor {
    Tensor::from_fn(shape, |_| StandardNormal.sample(rng))
}
