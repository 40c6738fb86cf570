//! Bilinear resampling with the half-pixel-centre convention:
//! source coordinate `(i + 0.5)·(in/out) − 0.5`, clamped to the valid range.

use super::Tensor4;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            Tap {
                lo,
                hi,
                frac: (s - lo as f64) as f32,
            }
        })
        .collect()
}

/// Resize every plane to `th × tw`. Works for both up- and down-sizing.
pub fn bilinear_resize(x: &Tensor4, th: usize, tw: usize) -> Result<Tensor4> {
    if th == 0 || tw == 0 {
        return Err(Error::config("resize target must be non-empty"));
    }
    let [n, c, h, w] = x.dims();
    if (h, w) == (th, tw) {
        return Ok(x.clone());
    }
    let ty = taps(h, th);
    let tx = taps(w, tw);
    let mut out = Tensor4::zeros([n, c, th, tw]);
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, ry) in ty.iter().enumerate() {
                let r0 = &src[ry.lo * w..(ry.lo + 1) * w];
                let r1 = &src[ry.hi * w..(ry.hi + 1) * w];
                for (ox, rx) in tx.iter().enumerate() {
                    let top = r0[rx.lo] + (r0[rx.hi] - r0[rx.lo]) * rx.frac;
                    let bot = r1[rx.lo] + (r1[rx.hi] - r1[rx.lo]) * rx.frac;
                    dst[oy * tw + ox] = top + (bot - top) * ry.frac;
                }
            }
        }
    }
    Ok(out)
}

/// [`bilinear_resize`] restricted to enlargement (target ≥ source on both axes).
pub fn bilinear_upsample(x: &Tensor4, th: usize, tw: usize) -> Result<Tensor4> {
    if th < x.h() || tw < x.w() {
        return Err(Error::config(format!(
            "upsample target {th}x{tw} is smaller than source {}x{}",
            x.h(),
            x.w()
        )));
    }
    bilinear_resize(x, th, tw)
}

/// Transpose of [`bilinear_resize`]: scatters each output gradient back onto
/// its four source pixels with the interpolation weights.
pub fn bilinear_resize_backward(grad_out: &Tensor4, src_h: usize, src_w: usize) -> Result<Tensor4> {
    let [n, c, th, tw] = grad_out.dims();
    if (src_h, src_w) == (th, tw) {
        return Ok(grad_out.clone());
    }
    let ty = taps(src_h, th);
    let tx = taps(src_w, tw);
    let mut g = Tensor4::zeros([n, c, src_h, src_w]);
    for b in 0..n {
        for ch in 0..c {
            let go = grad_out.plane(b, ch);
            let gi = g.plane_mut(b, ch);
            for (oy, ry) in ty.iter().enumerate() {
                for (ox, rx) in tx.iter().enumerate() {
                    let v = go[oy * tw + ox];
                    let (wy1, wx1) = (ry.frac, rx.frac);
                    let (wy0, wx0) = (1.0 - wy1, 1.0 - wx1);
                    gi[ry.lo * src_w + rx.lo] += v * wy0 * wx0;
                    gi[ry.lo * src_w + rx.hi] += v * wy0 * wx1;
                    gi[ry.hi * src_w + rx.lo] += v * wy1 * wx0;
                    gi[ry.hi * src_w + rx.hi] += v * wy1 * wx1;
                }
            }
        }
    }
    Ok(g)
}
