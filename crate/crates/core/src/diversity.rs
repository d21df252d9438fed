//! Firing-pattern statistics of a spike population.
//!
//! Each neuron's `T` spikes form a `T`-bit pattern, earliest step as the most
//! significant bit, so the stream `1,1,1,0` is pattern `0b1110 = 14`.

use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::SpikeTrain;
use crate::tensor::Tensor;

pub const MAX_PATTERN_STEPS: usize = 16;
pub const RASTER_HEADER: &str = "neuron_id,t,spike";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternHistogram {
    #[serde(rename = "T")]
    pub time_steps: usize,
    pub counts: Vec<u64>,
}

impl PatternHistogram {
    pub fn empty(time_steps: usize) -> Self {
        Self {
            time_steps,
            counts: vec![0; 1 << time_steps],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &PatternHistogram) -> Result<()> {
        if other.time_steps != self.time_steps {
            return Err(Error::invalid(
                "pattern_histogram",
                format!("cannot merge T={} into T={}", other.time_steps, self.time_steps),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("histogram serializes")
    }
}

/// Histogram of per-neuron patterns over a binary `[T, ...]` tensor.
pub fn pattern_histogram(spikes: &Tensor) -> Result<PatternHistogram> {
    if spikes.rank() < 2 {
        return Err(Error::invalid(
            "pattern_histogram",
            format!("expected [T, ...], got {:?}", spikes.shape()),
        ));
    }
    let steps = spikes.shape()[0];
    if steps == 0 || steps > MAX_PATTERN_STEPS {
        return Err(Error::invalid(
            "pattern_histogram",
            format!("T must lie in 1..={MAX_PATTERN_STEPS}, got {steps}"),
        ));
    }
    let data = spikes.data();
    if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::NotBinary {
            op: "pattern_histogram",
            index,
            value,
        });
    }
    let neurons = spikes.len() / steps;
    let mut hist = PatternHistogram::empty(steps);
    for n in 0..neurons {
        let pattern = (0..steps).fold(0usize, |acc, t| (acc << 1) | (data[t * neurons + n] as usize));
        hist.counts[pattern] += 1;
    }
    Ok(hist)
}

pub fn train_histogram(spikes: &SpikeTrain) -> Result<PatternHistogram> {
    pattern_histogram(spikes.as_tensor())
}

/// Number of distinct patterns observed.
pub fn coverage(h: &PatternHistogram) -> usize {
    h.counts.iter().filter(|&&c| c > 0).count()
}

/// Shannon entropy of the pattern distribution, in bits.
pub fn pattern_entropy(h: &PatternHistogram) -> Result<f64> {
    let total = h.total();
    if total == 0 {
        return Err(Error::Empty {
            op: "pattern_entropy",
        });
    }
    let total = total as f64;
    Ok(h.counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Writes rows `neuron_id,t,spike` for the selected neurons, neuron-major,
/// with `t` counted from 1.
pub fn write_raster(spikes: &SpikeTrain, neurons: Range<usize>, mut out: impl Write) -> std::io::Result<()> {
    let steps = spikes.time_steps();
    let n_all = spikes.neurons();
    let data = spikes.as_tensor().data();
    writeln!(out, "{RASTER_HEADER}")?;
    for n in neurons.start.min(n_all)..neurons.end.min(n_all) {
        for t in 0..steps {
            writeln!(out, "{},{},{}", n, t + 1, data[t * n_all + n] as u8)?;
        }
    }
    Ok(())
}

pub fn raster_export(spikes: &SpikeTrain, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_raster(spikes, 0..spikes.neurons(), &mut buf).expect("write to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Parses a full raster back into a spike train of shape `[T, neuron_shape..]`.
pub fn read_raster(reader: impl BufRead, neuron_shape: &[usize]) -> Result<SpikeTrain> {
    let mut rows = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == RASTER_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                reason: format!("expected header {RASTER_HEADER:?}"),
            })
        }
    }
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |reason: String| Error::Parse { line: line_no, reason };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        let [n, t, s] = f[..] else {
            return Err(err(format!("expected 3 fields, found {}", f.len())));
        };
        let parse = |v: &str| v.parse::<usize>().map_err(|_| err(format!("invalid field {v:?}")));
        rows.push((parse(n)?, parse(t)?, parse(s)?));
    }
    let neurons: usize = neuron_shape.iter().product();
    let steps = rows.iter().map(|r| r.1).max().unwrap_or(0);
    if steps == 0 {
        return Err(Error::Empty { op: "read_raster" });
    }
    let mut data = vec![0.0; steps * neurons];
    for (n, t, s) in rows {
        if n >= neurons || t == 0 || s > 1 {
            return Err(Error::invalid(
                "read_raster",
                format!("row ({n}, {t}, {s}) does not fit {neurons} neurons"),
            ));
        }
        data[(t - 1) * neurons + n] = s as f64;
    }
    let mut shape = vec![steps];
    shape.extend_from_slice(neuron_shape);
    SpikeTrain::new(Tensor::new(shape, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn train(t: usize, n: usize, bits: &[u8]) -> Tensor {
        Tensor::new(vec![t, n], bits.iter().map(|&b| b as f64).collect()).unwrap()
    }

    #[test]
    fn silent_train_is_pattern_zero() {
        let h = pattern_histogram(&Tensor::zeros(&[4, 2, 3, 3])).unwrap();
        assert_eq!(h.counts.len(), 16);
        assert_eq!(h.counts[0], 18);
        assert_eq!(coverage(&h), 1);
        assert_eq!(pattern_entropy(&h).unwrap(), 0.0);
    }

    #[test]
    fn stream_1110_is_fourteen() {
        let h = pattern_histogram(&train(4, 1, &[1, 1, 1, 0])).unwrap();
        assert_eq!(h.counts[14], 1);
        assert_eq!(h.total(), 1);
    }

    #[test]
    fn full_coverage_and_uniform_entropy() {
        let mut bits = vec![0u8; 4 * 16];
        for n in 0..16 {
            for t in 0..4 {
                bits[t * 16 + n] = ((n >> (3 - t)) & 1) as u8;
            }
        }
        let h = pattern_histogram(&train(4, 16, &bits)).unwrap();
        assert_eq!(coverage(&h), 16);
        assert!((pattern_entropy(&h).unwrap() - 4.0).abs() < 1e-12);
        assert!(h.counts.iter().all(|&c| c == 1));
    }

    #[test]
    fn two_equal_bins_is_one_bit() {
        let h = pattern_histogram(&train(1, 4, &[0, 1, 0, 1])).unwrap();
        assert!((pattern_entropy(&h).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pattern_histogram(&Tensor::full(&[2, 2], 0.5)).is_err());
        assert!(pattern_histogram(&Tensor::zeros(&[17, 1])).is_err());
        assert!(pattern_entropy(&PatternHistogram::empty(2)).is_err());
    }

    #[test]
    fn raster_rows() {
        let s = SpikeTrain::new(train(2, 1, &[1, 0])).unwrap();
        let mut out = Vec::new();
        write_raster(&s, 0..1, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "neuron_id,t,spike\n0,1,1\n0,2,0\n");
        let mut out = Vec::new();
        write_raster(&s, 0..0, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "neuron_id,t,spike\n");
    }

    #[test]
    fn histogram_json_schema() {
        let h = pattern_histogram(&train(2, 2, &[1, 0, 1, 1])).unwrap();
        // neuron 0 fires at both steps (pattern 3), neuron 1 only at the second (pattern 1)
        assert_eq!(h.to_json(), r#"{"T":2,"counts":[0,1,0,1]}"#);
    }

    fn arb_train() -> impl Strategy<Value = (usize, usize, Vec<u8>)> {
        (1usize..6, 1usize..12).prop_flat_map(|(t, n)| {
            (Just(t), Just(n), prop::collection::vec(0u8..2, t * n))
        })
    }

    proptest! {
        #[test]
        fn mass_is_conserved_and_entropy_bounded((t, n, bits) in arb_train()) {
            let h = pattern_histogram(&train(t, n, &bits)).unwrap();
            prop_assert_eq!(h.total(), n as u64);
            let e = pattern_entropy(&h).unwrap();
            prop_assert!(e >= 0.0);
            prop_assert!(e <= (coverage(&h) as f64).log2() + 1e-12);
            prop_assert!(e <= t as f64 + 1e-12);
        }

        #[test]
        fn neuron_permutation_is_invisible((t, n, bits) in arb_train(), rot in 0usize..12) {
            let rot = rot % n;
            let mut permuted = bits.clone();
            for step in 0..t {
                for i in 0..n {
                    permuted[step * n + (i + rot) % n] = bits[step * n + i];
                }
            }
            prop_assert_eq!(
                pattern_histogram(&train(t, n, &bits)).unwrap(),
                pattern_histogram(&train(t, n, &permuted)).unwrap()
            );
        }

        #[test]
        fn time_reversal_reverses_pattern_bits((t, n, bits) in arb_train()) {
            let mut reversed = bits.clone();
            for step in 0..t {
                reversed[(t - 1 - step) * n..(t - step) * n]
                    .copy_from_slice(&bits[step * n..(step + 1) * n]);
            }
            let h = pattern_histogram(&train(t, n, &bits)).unwrap();
            let r = pattern_histogram(&train(t, n, &reversed)).unwrap();
            for (p, &c) in h.counts.iter().enumerate() {
                let q = (0..t).fold(0, |acc, b| (acc << 1) | ((p >> b) & 1));
                prop_assert_eq!(r.counts[q], c);
            }
        }

        #[test]
        fn raster_round_trip((t, n, bits) in arb_train()) {
            let s = SpikeTrain::new(train(t, n, &bits)).unwrap();
            let mut out = Vec::new();
            write_raster(&s, 0..n, &mut out).unwrap();
            prop_assert_eq!(read_raster(&out[..], &[n]).unwrap(), s);
        }
    }
}
