//! Dense row-major tensors and the kernels the rest of the crate is built on.
//!
//! Every tensor uses the `[T, C, H, W]` axis order (or a suffix of it for
//! lower ranks). Kernels report their arithmetic to the active
//! [`EnergyLedger`](crate::energy::EnergyLedger): a float-by-float product is
//! one MUL, any addition is one AC, and a product with a binary (spike)
//! operand is one AC per active spike. Comparisons, copies and elementwise
//! activations are free.

pub(crate) mod broadcast;
pub(crate) mod conv;
mod norm;
mod pool;

pub use broadcast::{broadcast_combine, broadcast_shape, CombineOp};
pub use conv::{conv2d, linear, ConvSpec, LinearSpec};
pub use norm::BatchNorm;
pub use pool::{maxpool_over, maxpool_with_argmax};

use crate::energy::ledger;
use crate::error::{Error, Result};

/// Named axes of a rank-4 tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Time = 0,
    Channel = 1,
    Height = 2,
    Width = 3,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Time, Axis::Channel, Axis::Height, Axis::Width];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    binary: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub const MAX_RANK: usize = 4;

    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > Self::MAX_RANK {
            return Err(Error::invalid(
                "tensor",
                format!("rank must be 1..=4, got shape {shape:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!(
                    "shape {shape:?} holds {n} elements but data has {}",
                    data.len()
                ),
            ));
        }
        Ok(Self {
            shape,
            data,
            binary: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n]).expect("valid shape")
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(vec![1], vec![value]).expect("valid shape")
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self::new(shape.to_vec(), (0..n).map(&mut f).collect()).expect("valid shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the elements. Clears the binary flag, since the
    /// caller may write arbitrary values.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.binary = false;
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    /// Flags the tensor as a spike tensor after checking every element is 0 or 1.
    pub fn into_binary(mut self) -> Result<Self> {
        if let Some((index, &value)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(Error::NotBinary {
                op: "into_binary",
                index,
                value,
            });
        }
        self.binary = true;
        Ok(self)
    }

    pub(crate) fn binary_unchecked(mut self) -> Self {
        debug_assert!(self.data.iter().all(|&v| v == 0.0 || v == 1.0));
        self.binary = true;
        self
    }

    /// Drops the binary flag so the tensor is treated as real-valued.
    pub fn into_float(mut self) -> Self {
        self.binary = false;
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Tensor) -> Result<()> {
        if grad.shape != self.shape {
            return Err(Error::shape("set_grad", &self.shape, &grad.shape));
        }
        self.grad = Some(grad.data);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.rank());
        index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.len() || shape.is_empty() || shape.len() > Self::MAX_RANK {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        self.grad = None;
        Ok(self)
    }

    /// Slice `index` along the leading axis, dropping that axis.
    pub fn slice_leading(&self, index: usize) -> Result<Tensor> {
        if self.rank() < 2 || index >= self.shape[0] {
            return Err(Error::invalid(
                "slice_leading",
                format!("index {index} out of range for shape {:?}", self.shape),
            ));
        }
        let inner: usize = self.shape[1..].iter().product();
        let data = self.data[index * inner..(index + 1) * inner].to_vec();
        let mut out = Tensor::new(self.shape[1..].to_vec(), data)?;
        out.binary = self.binary;
        Ok(out)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::Empty { op: "stack" })?;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(Error::shape("stack", &first.shape, &p.shape));
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        let mut out = Tensor::new(shape, data)?;
        out.binary = parts.iter().all(|p| p.binary);
        Ok(out)
    }

    /// Elementwise map. Not counted in the energy ledger; use it for
    /// activations and bookkeeping, not for arithmetic that should be costed.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            binary: false,
            grad: None,
        }
    }

    /// Multiplies by a real scalar: one MUL per element.
    pub fn scale(&self, factor: f64) -> Tensor {
        ledger::count_mul(self.len() as u64);
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_data_length() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn binary_flag_is_validated() {
        let t = Tensor::new(vec![3], vec![0.0, 1.0, 0.5]).unwrap();
        assert!(matches!(
            t.into_binary(),
            Err(Error::NotBinary { index: 2, .. })
        ));
        let t = Tensor::new(vec![2], vec![0.0, 1.0]).unwrap().into_binary().unwrap();
        assert!(t.is_binary());
    }

    #[test]
    fn grad_must_match_shape() {
        let mut t = Tensor::zeros(&[2, 3]);
        assert!(t.set_grad(Tensor::zeros(&[3, 2])).is_err());
        t.set_grad(Tensor::ones(&[2, 3])).unwrap();
        assert_eq!(t.grad().unwrap(), &[1.0; 6]);
    }

    #[test]
    fn stack_and_slice_are_inverse() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64);
        let b = Tensor::from_fn(&[2, 3], |i| -(i as f64));
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 3]);
        assert_eq!(s.slice_leading(0).unwrap(), a);
        assert_eq!(s.slice_leading(1).unwrap(), b);
    }

    #[test]
    fn offsets_are_row_major() {
        let t = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f64);
        assert_eq!(t.get(&[1, 2, 3, 4]), 119.0);
        assert_eq!(t.get(&[0, 1, 0, 0]), 20.0);
    }
}
