use super::{strides_of, Tensor};
use crate::energy::ledger;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineOp {
    Add,
    Mul,
}

/// Result shape of broadcasting two equal-rank shapes, where each axis must
/// either agree or have extent 1 on one side.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a.len() != b.len() {
        return None;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Some(x),
            (1, _) => Some(y),
            (_, 1) => Some(x),
            _ => None,
        })
        .collect()
}

/// Strides of `shape` viewed at `out` shape: zero on broadcast axes.
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    strides_of(shape)
        .into_iter()
        .zip(shape.iter().zip(out))
        .map(|(s, (&e, &o))| if e == 1 && o != 1 { 0 } else { s })
        .collect()
}

/// Calls `f(out_index, a_index, b_index)` for every element of the broadcast shape.
pub(crate) fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    let rank = out.len();
    let mut coord = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for d in (0..rank).rev() {
            coord[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if coord[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            coord[d] = 0;
        }
    }
}

/// Elementwise `a op b` at the broadcast shape.
///
/// A product with a binary-flagged operand is a gated pass-through: it costs
/// one AC per position where every binary operand is active, and zero MULs.
pub fn broadcast_combine(a: &Tensor, b: &Tensor, op: CombineOp) -> Result<Tensor> {
    let out_shape = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| Error::shape("broadcast_combine", a.shape(), b.shape()))?;
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let n: usize = out_shape.iter().product();
    let (x, y) = (a.data(), b.data());
    let mut out = vec![0.0; n];

    match op {
        CombineOp::Add => {
            for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| out[o] = x[i] + y[j]);
            ledger::count_ac(n as u64);
            Tensor::new(out_shape, out)
        }
        CombineOp::Mul if a.is_binary() || b.is_binary() => {
            let mut active = 0u64;
            let (ga, gb) = (a.is_binary(), b.is_binary());
            for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| {
                let open = (!ga || x[i] != 0.0) && (!gb || y[j] != 0.0);
                if open {
                    active += 1;
                    out[o] = match (ga, gb) {
                        (true, true) => 1.0,
                        (true, false) => y[j],
                        _ => x[i],
                    };
                }
            });
            ledger::count_ac(active);
            let t = Tensor::new(out_shape, out)?;
            Ok(if ga && gb { t.binary_unchecked() } else { t })
        }
        CombineOp::Mul => {
            for_each_broadcast(&out_shape, &sa, &sb, |o, i, j| out[o] = x[i] * y[j]);
            ledger::count_mul(n as u64);
            Tensor::new(out_shape, out)
        }
    }
}
