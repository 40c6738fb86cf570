use super::{Dims, Tensor4};
use crate::error::{Error, Result};

/// 2×2 max pooling with stride 2. Odd trailing rows/columns are dropped.
///
/// Returns the pooled tensor and, for every output entry, the flat index of
/// the winning input element. Ties go to the first element in row-major order.
pub fn maxpool2x2_forward(x: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
    let [n, c, h, w] = x.dims();
    if h < 2 || w < 2 {
        return Err(Error::config(format!(
            "max-pool needs h, w >= 2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let src = x.data();
    let mut k = 0;
    for b in 0..n {
        for ch in 0..c {
            let base = x.offset(b, ch, 0, 0);
            for oy in 0..oh {
                for ox in 0..ow {
                    let i0 = base + 2 * oy * w + 2 * ox;
                    let mut best = i0;
                    for i in [i0 + 1, i0 + w, i0 + w + 1] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.data_mut()[k] = src[best];
                    argmax[k] = best;
                    k += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2x2_backward(
    grad_out: &Tensor4,
    argmax: &[usize],
    input_dims: Dims,
) -> Result<Tensor4> {
    let [n, c, h, w] = input_dims;
    if grad_out.dims() != [n, c, h / 2, w / 2] || argmax.len() != grad_out.len() {
        return Err(Error::shape(format!(
            "maxpool backward: grad {:?} does not fit input {input_dims:?}",
            grad_out.dims()
        )));
    }
    let mut g = Tensor4::zeros(input_dims);
    for (&i, &v) in argmax.iter().zip(grad_out.data()) {
        g.data_mut()[i] += v;
    }
    Ok(g)
}
