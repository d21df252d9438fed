//! Seeded single-object images with box targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Tensor;

/// Normalized box: center and extent as fractions of the image side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxTarget {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxTarget {
    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[1, H, W]`, intensities in `[0, 1]`.
    pub image: Tensor,
    pub target: BoxTarget,
}

/// One image: dim background noise and a single bright rectangle covering
/// 25% to 60% of each side.
pub fn sample(height: usize, width: usize, rng: &mut impl Rng) -> Result<Sample> {
    if height < 4 || width < 4 {
        return Err(Error::invalid(
            "synthetic",
            format!("image must be at least 4x4, got {height}x{width}"),
        ));
    }
    let extent = |side: usize, rng: &mut dyn rand::RngCore| {
        let lo = (side / 4).max(1);
        let hi = (side * 3 / 5).max(lo + 1);
        let len = rng.random_range(lo..hi);
        let start = rng.random_range(0..=side - len);
        (start, len)
    };
    let (x0, bw) = extent(width, rng);
    let (y0, bh) = extent(height, rng);
    let level = rng.random_range(0.6..1.0);
    let mut data = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            let inside = (y0..y0 + bh).contains(&y) && (x0..x0 + bw).contains(&x);
            let noise = rng.random_range(0.0..0.1);
            data[y * width + x] = if inside { level - noise } else { noise };
        }
    }
    Ok(Sample {
        image: Tensor::new(vec![1, height, width], data)?,
        target: BoxTarget {
            cx: (x0 as f64 + bw as f64 / 2.0) / width as f64,
            cy: (y0 as f64 + bh as f64 / 2.0) / height as f64,
            w: bw as f64 / width as f64,
            h: bh as f64 / height as f64,
        },
    })
}

/// `count` samples drawn from the `"synthetic"` stream of `seed`.
pub fn batch(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = stream(seed, "synthetic");
    (0..count).map(|_| sample(height, width, &mut rng)).collect()
}
