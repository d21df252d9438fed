use rand::Rng;

use super::Tensor;
use crate::energy::ledger;
use crate::error::{Error, Result};

/// A 2D convolution layer: square `k x k` kernel, zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out_channels, in_channels, k, k]`
    pub weights: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
}

impl ConvSpec {
    pub fn new(
        weights: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 4 || s[2] != s[3] {
            return Err(Error::invalid(
                "conv2d",
                format!("weights must be [C_out, C_in, k, k], got {s:?}"),
            ));
        }
        let spec = Self {
            out_channels: s[0],
            in_channels: s[1],
            kernel_size: s[2],
            stride,
            padding,
            weights,
            bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform `±1/sqrt(fan_in)` weights and zero bias.
    pub fn seeded(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = (in_channels * kernel_size * kernel_size) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let shape = [out_channels, in_channels, kernel_size, kernel_size];
        let weights = Tensor::from_fn(&shape, |_| rng.random_range(-bound..bound));
        Self::new(weights, Tensor::zeros(&[out_channels]), stride, padding)
    }

    /// `k x k` kernel with `padding = (k - 1) / 2` and stride 1.
    pub fn same(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::seeded(
            in_channels,
            out_channels,
            kernel_size,
            1,
            (kernel_size - 1) / 2,
            rng,
        )
    }

    /// Per-channel identity: a centred unit tap.
    pub fn identity(channels: usize, kernel_size: usize) -> Result<Self> {
        let k = kernel_size;
        let mut weights = Tensor::zeros(&[channels, channels, k, k]);
        let shape = weights.shape().to_vec();
        let strides = super::strides_of(&shape);
        let data = weights.data_mut();
        for c in 0..channels {
            data[c * strides[0] + c * strides[1] + (k / 2) * strides[2] + k / 2] = 1.0;
        }
        Self::new(weights, Tensor::zeros(&[channels]), 1, (k - 1) / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 {
            return Err(Error::invalid(
                "conv2d",
                "kernel_size and stride must be at least 1",
            ));
        }
        let expected = [
            self.out_channels,
            self.in_channels,
            self.kernel_size,
            self.kernel_size,
        ];
        if self.weights.shape() != expected {
            return Err(Error::shape("conv2d", &expected, self.weights.shape()));
        }
        if self.bias.shape() != [self.out_channels] {
            return Err(Error::shape("conv2d", &[self.out_channels], self.bias.shape()));
        }
        Ok(())
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Geometry::new(self.in_channels, h, w, self.out_channels, self.kernel_size, self.stride, self.padding)
            .map(|g| (g.out_h, g.out_w))
    }

    /// True when the convolution maps `[C, H, W]` onto the same shape.
    pub fn preserves_shape(&self) -> bool {
        self.in_channels == self.out_channels
            && self.stride == 1
            && self.kernel_size % 2 == 1
            && self.padding == (self.kernel_size - 1) / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geometry {
    pub fn new(
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if k == 0 || stride == 0 {
            return Err(Error::invalid("conv2d", "kernel_size and stride must be at least 1"));
        }
        let span_h = in_h + 2 * pad;
        let span_w = in_w + 2 * pad;
        if span_h < k || span_w < k {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {k} larger than padded input {span_h}x{span_w}"),
            ));
        }
        Ok(Self {
            in_c,
            in_h,
            in_w,
            out_c,
            k,
            stride,
            pad,
            out_h: (span_h - k) / stride + 1,
            out_w: (span_w - k) / stride + 1,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Input coordinate hit by output `o` and tap `d`, if inside the image.
    #[inline]
    fn source(&self, o: usize, d: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + d).checked_sub(self.pad)?;
        (p < extent).then_some(p)
    }
}

/// Cross-correlation on a single `[C, H, W]` sample, with op counting.
pub(crate) fn conv2d_raw(
    g: &Geometry,
    input: &[f64],
    weights: &[f64],
    bias: Option<&[f64]>,
    binary: bool,
) -> Vec<f64> {
    let (k, hw) = (g.k, g.in_h * g.in_w);
    let mut out = vec![0.0; g.out_len()];
    let mut taps = 0u64;
    for oc in 0..g.out_c {
        let b = bias.map_or(0.0, |b| b[oc]);
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = b;
                for ic in 0..g.in_c {
                    let wbase = (oc * g.in_c + ic) * k * k;
                    for dy in 0..k {
                        let Some(iy) = g.source(oy, dy, g.in_h) else { continue };
                        for dx in 0..k {
                            let Some(ix) = g.source(ox, dx, g.in_w) else { continue };
                            let x = input[ic * hw + iy * g.in_w + ix];
                            let w = weights[wbase + dy * k + dx];
                            if binary {
                                if x != 0.0 {
                                    acc += w;
                                    taps += 1;
                                }
                            } else {
                                acc += w * x;
                                taps += 1;
                            }
                        }
                    }
                }
                out[(oc * g.out_h + oy) * g.out_w + ox] = acc;
            }
        }
    }
    if binary {
        ledger::count_ac(taps);
    } else {
        ledger::count(taps, taps);
    }
    out
}

/// Gradient of a convolution w.r.t. its input.
pub(crate) fn conv2d_grad_input(g: &Geometry, grad_out: &[f64], weights: &[f64]) -> Vec<f64> {
    let (k, hw) = (g.k, g.in_h * g.in_w);
    let mut gin = vec![0.0; g.in_len()];
    for oc in 0..g.out_c {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let go = grad_out[(oc * g.out_h + oy) * g.out_w + ox];
                if go == 0.0 {
                    continue;
                }
                for ic in 0..g.in_c {
                    let wbase = (oc * g.in_c + ic) * k * k;
                    for dy in 0..k {
                        let Some(iy) = g.source(oy, dy, g.in_h) else { continue };
                        for dx in 0..k {
                            let Some(ix) = g.source(ox, dx, g.in_w) else { continue };
                            gin[ic * hw + iy * g.in_w + ix] += go * weights[wbase + dy * k + dx];
                        }
                    }
                }
            }
        }
    }
    gin
}

/// Gradient of a convolution w.r.t. its weights, accumulated into `gw`.
pub(crate) fn conv2d_grad_weights(g: &Geometry, grad_out: &[f64], input: &[f64], gw: &mut [f64]) {
    let (k, hw) = (g.k, g.in_h * g.in_w);
    for oc in 0..g.out_c {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let go = grad_out[(oc * g.out_h + oy) * g.out_w + ox];
                if go == 0.0 {
                    continue;
                }
                for ic in 0..g.in_c {
                    let wbase = (oc * g.in_c + ic) * k * k;
                    for dy in 0..k {
                        let Some(iy) = g.source(oy, dy, g.in_h) else { continue };
                        for dx in 0..k {
                            let Some(ix) = g.source(ox, dx, g.in_w) else { continue };
                            gw[wbase + dy * k + dx] += go * input[ic * hw + iy * g.in_w + ix];
                        }
                    }
                }
            }
        }
    }
}

/// Applies `spec` to `[C, H, W]`, or slice by slice to `[N, C, H, W]`.
///
/// Binary-flagged inputs are treated as spikes: each active tap costs one AC
/// and no MULs.
pub fn conv2d(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    spec.validate()?;
    let s = input.shape();
    let (batch, chw) = match s.len() {
        3 => (None, s),
        4 => (Some(s[0]), &s[1..]),
        _ => return Err(Error::invalid("conv2d", format!("expected rank 3 or 4 input, got {s:?}"))),
    };
    if chw[0] != spec.in_channels {
        return Err(Error::shape(
            "conv2d",
            s,
            spec.weights.shape(),
        ));
    }
    let g = Geometry::new(
        chw[0],
        chw[1],
        chw[2],
        spec.out_channels,
        spec.kernel_size,
        spec.stride,
        spec.padding,
    )
    .map_err(|_| Error::shape("conv2d", s, spec.weights.shape()))?;
    let n = batch.unwrap_or(1);
    let mut data = Vec::with_capacity(n * g.out_len());
    for i in 0..n {
        let x = &input.data()[i * g.in_len()..(i + 1) * g.in_len()];
        data.extend(conv2d_raw(
            &g,
            x,
            spec.weights.data(),
            Some(spec.bias.data()),
            input.is_binary(),
        ));
    }
    let mut shape = vec![g.out_c, g.out_h, g.out_w];
    if let Some(n) = batch {
        shape.insert(0, n);
    }
    Tensor::new(shape, data)
}

/// Fully connected map `[out, in]` plus bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpec {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LinearSpec {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let s = weights.shape();
        if s.len() != 2 || bias.shape() != [s[0]] {
            return Err(Error::shape("linear", s, bias.shape()));
        }
        Ok(Self { weights, bias })
    }

    pub fn seeded(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weights = Tensor::from_fn(&[outputs, inputs], |_| rng.random_range(-bound..bound));
        Self::new(weights, Tensor::zeros(&[outputs]))
    }

    pub fn identity(n: usize) -> Self {
        let weights = Tensor::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 });
        Self::new(weights, Tensor::zeros(&[n])).expect("square identity")
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }
}

pub(crate) fn linear_raw(weights: &[f64], bias: &[f64], input: &[f64], binary: bool) -> Vec<f64> {
    let n_in = input.len();
    let mut taps = 0u64;
    let out = bias
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * n_in..(o + 1) * n_in];
            let mut acc = b;
            for (&w, &x) in row.iter().zip(input) {
                if binary {
                    if x != 0.0 {
                        acc += w;
                        taps += 1;
                    }
                } else {
                    acc += w * x;
                    taps += 1;
                }
            }
            acc
        })
        .collect();
    if binary {
        ledger::count_ac(taps);
    } else {
        ledger::count(taps, taps);
    }
    out
}

/// Applies a fully connected map to the flattened input; returns `[out]`.
pub fn linear(input: &Tensor, spec: &LinearSpec) -> Result<Tensor> {
    if input.len() != spec.inputs() {
        return Err(Error::shape("linear", input.shape(), spec.weights.shape()));
    }
    let out = linear_raw(
        spec.weights.data(),
        spec.bias.data(),
        input.data(),
        input.is_binary(),
    );
    Tensor::new(vec![spec.outputs()], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ledger::measure;
    use crate::rng::stream;

    #[test]
    fn identity_kernel_copies_input() {
        let spec = ConvSpec::new(Tensor::ones(&[1, 1, 1, 1]), Tensor::zeros(&[1]), 1, 0).unwrap();
        let x = Tensor::from_fn(&[1, 3, 4], |i| i as f64 * 0.5 - 1.0);
        assert_eq!(conv2d(&x, &spec).unwrap(), x);
    }

    #[test]
    fn all_ones_3x3_sums_nine_taps() {
        let spec = ConvSpec::new(Tensor::ones(&[1, 1, 3, 3]), Tensor::zeros(&[1]), 1, 0).unwrap();
        let y = conv2d(&Tensor::ones(&[1, 3, 3]), &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn zero_kernel_still_costs_every_tap() {
        let spec = ConvSpec::new(Tensor::zeros(&[2, 1, 3, 3]), Tensor::zeros(&[2]), 1, 0).unwrap();
        let x = Tensor::from_fn(&[1, 5, 5], |i| i as f64);
        let (y, ledger) = measure(|| conv2d(&x, &spec).unwrap());
        assert!(y.data().iter().all(|&v| v == 0.0));
        // 9 taps x (2 channels x 3 x 3 outputs)
        assert_eq!(ledger.mul_count(), 9 * 18);
    }

    #[test]
    fn binary_input_counts_only_active_taps() {
        let spec = ConvSpec::new(Tensor::ones(&[1, 1, 3, 3]), Tensor::zeros(&[1]), 1, 0).unwrap();
        let mut x = Tensor::zeros(&[1, 3, 3]);
        x.data_mut()[0] = 1.0;
        x.data_mut()[4] = 1.0;
        let x = x.into_binary().unwrap();
        let (y, ledger) = measure(|| conv2d(&x, &spec).unwrap());
        assert_eq!(y.data(), &[2.0]);
        assert_eq!(ledger.mul_count(), 0);
        assert_eq!(ledger.ac_count(), 2);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let spec = ConvSpec::new(Tensor::ones(&[1, 2, 3, 3]), Tensor::zeros(&[1]), 1, 1).unwrap();
        let err = conv2d(&Tensor::zeros(&[3, 4, 4]), &spec).unwrap_err().to_string();
        assert!(err.contains("[3, 4, 4]") && err.contains("[1, 2, 3, 3]"), "{err}");
    }

    #[test]
    fn stride_and_padding_geometry() {
        let mut rng = stream(1, "test");
        let spec = ConvSpec::seeded(2, 3, 3, 2, 1, &mut rng).unwrap();
        let y = conv2d(&Tensor::ones(&[4, 2, 8, 6]), &spec).unwrap();
        assert_eq!(y.shape(), &[4, 3, 4, 3]);
    }

    #[test]
    fn rejects_zero_stride() {
        let r = ConvSpec::new(Tensor::ones(&[1, 1, 1, 1]), Tensor::zeros(&[1]), 0, 0);
        assert!(r.is_err());
    }

    #[test]
    fn linear_counts() {
        let spec = LinearSpec::new(Tensor::ones(&[2, 3]), Tensor::full(&[2], 0.5)).unwrap();
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let (y, ledger) = measure(|| linear(&x, &spec).unwrap());
        assert_eq!(y.data(), &[6.5, 6.5]);
        assert_eq!((ledger.mul_count(), ledger.ac_count()), (6, 6));

        let s = Tensor::new(vec![3], vec![1.0, 0.0, 1.0]).unwrap().into_binary().unwrap();
        let (y, ledger) = measure(|| linear(&s, &spec).unwrap());
        assert_eq!(y.data(), &[2.5, 2.5]);
        assert_eq!((ledger.mul_count(), ledger.ac_count()), (0, 4));
    }
}
