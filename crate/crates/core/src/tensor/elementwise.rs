use super::{ensure_same_dims, Tensor4};
use crate::error::{Error, Result};

/// Hadamard product.
pub fn elementwise_mul(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    ensure_same_dims(a, b, "elementwise_mul")?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor4::new(a.dims(), data)
}

/// Returns `(grad_a, grad_b) = (grad·b, grad·a)`.
pub fn elementwise_mul_backward(
    grad: &Tensor4,
    a: &Tensor4,
    b: &Tensor4,
) -> Result<(Tensor4, Tensor4)> {
    ensure_same_dims(grad, a, "elementwise_mul_backward")?;
    Ok((elementwise_mul(grad, b)?, elementwise_mul(grad, a)?))
}

/// Mean of squared differences, accumulated in `f64`.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<f64> {
    ensure_same_dims(pred, target, "mse_loss")?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `2 (pred − target) / count`.
pub fn mse_loss_backward(pred: &Tensor4, target: &Tensor4) -> Result<Tensor4> {
    ensure_same_dims(pred, target, "mse_loss_backward")?;
    let k = 2.0 / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| ((p as f64 - t as f64) * k) as f32)
        .collect();
    Tensor4::new(pred.dims(), data)
}

/// Stack tensors with equal `(n, h, w)` along the channel axis.
pub fn concat_channels(parts: &[Tensor4]) -> Result<Tensor4> {
    let first = parts
        .first()
        .ok_or_else(|| Error::config("concat of zero tensors"))?;
    let [n, _, h, w] = first.dims();
    if parts.iter().any(|p| p.n() != n || p.h() != h || p.w() != w) {
        return Err(Error::shape(
            "concat_channels: batch or spatial dims differ",
        ));
    }
    let c: usize = parts.iter().map(|p| p.c()).sum();
    let mut out = Tensor4::zeros([n, c, h, w]);
    for b in 0..n {
        let mut oc = 0;
        for p in parts {
            for ch in 0..p.c() {
                out.plane_mut(b, oc).copy_from_slice(p.plane(b, ch));
                oc += 1;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`concat_channels`].
pub fn split_channels(x: &Tensor4, channels: &[usize]) -> Result<Vec<Tensor4>> {
    if channels.iter().sum::<usize>() != x.c() {
        return Err(Error::shape("split_channels: channel counts do not add up"));
    }
    let [n, _, h, w] = x.dims();
    let mut parts = Vec::with_capacity(channels.len());
    let mut start = 0;
    for &c in channels {
        let mut p = Tensor4::zeros([n, c, h, w]);
        for b in 0..n {
            for ch in 0..c {
                p.plane_mut(b, ch).copy_from_slice(x.plane(b, start + ch));
            }
        }
        start += c;
        parts.push(p);
    }
    Ok(parts)
}

/// Element-wise sum of equally shaped tensors.
pub fn add_all(parts: &[Tensor4]) -> Result<Tensor4> {
    let mut acc = parts
        .first()
        .ok_or_else(|| Error::config("sum of zero tensors"))?
        .clone();
    for p in &parts[1..] {
        acc.add_assign(p)?;
    }
    Ok(acc)
}
