use super::{strides_of, Tensor};
use crate::error::{Error, Result};

/// Max over `axes`, keeping them as extent-1 axes. Also returns, per output
/// element, the flat input index of the first maximum.
pub fn maxpool_with_argmax(input: &Tensor, axes: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    if input.is_empty() {
        return Err(Error::Empty { op: "maxpool" });
    }
    if axes.is_empty() {
        return Err(Error::invalid("maxpool", "no axes to reduce"));
    }
    if let Some(&a) = axes.iter().find(|&&a| a >= input.rank()) {
        return Err(Error::invalid(
            "maxpool",
            format!("axis {a} out of range for shape {:?}", input.shape()),
        ));
    }
    let in_shape = input.shape();
    let out_shape: Vec<usize> = in_shape
        .iter()
        .enumerate()
        .map(|(i, &e)| if axes.contains(&i) { 1 } else { e })
        .collect();
    let out_strides = strides_of(&out_shape);
    // Input stride contribution to the output offset; zero on reduced axes.
    let proj: Vec<usize> = (0..in_shape.len())
        .map(|i| if axes.contains(&i) { 0 } else { out_strides[i] })
        .collect();
    let out_len: usize = out_shape.iter().product();
    let mut best = vec![f64::NEG_INFINITY; out_len];
    let mut arg = vec![usize::MAX; out_len];

    let mut coord = vec![0usize; in_shape.len()];
    for (flat, &v) in input.data().iter().enumerate() {
        let o: usize = coord.iter().zip(&proj).map(|(c, p)| c * p).sum();
        if arg[o] == usize::MAX || v > best[o] {
            best[o] = v;
            arg[o] = flat;
        }
        for d in (0..coord.len()).rev() {
            coord[d] += 1;
            if coord[d] < in_shape[d] {
                break;
            }
            coord[d] = 0;
        }
    }
    let mut out = Tensor::new(out_shape, best)?;
    if input.is_binary() {
        out = out.binary_unchecked();
    }
    Ok((out, arg))
}

/// Max over `axes` (indices into the shape). Comparisons are not costed.
pub fn maxpool_over(input: &Tensor, axes: &[usize]) -> Result<Tensor> {
    maxpool_with_argmax(input, axes).map(|(t, _)| t)
}
