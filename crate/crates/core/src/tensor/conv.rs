//! Stride-1 "same" convolution via im2col + GEMM.
//!
//! The column buffer is built one band of output rows at a time so that the
//! scratch memory stays bounded on full-resolution images.

use super::{ensure_same_dims, Tensor4};
use crate::error::{Error, Result};

/// Upper bound on the im2col scratch buffer, in `f32` elements (16 MiB).
const COL_BUDGET: usize = 4 << 20;

/// Weights `(out_ch, in_ch, kh, kw)` plus one bias per output channel.
/// Kernels are odd-sized and padded so the spatial size is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor4,
    pub bias: Vec<f32>,
}

impl ConvParams {
    pub fn new(weights: Tensor4, bias: Vec<f32>) -> Result<Self> {
        let [o, _, kh, kw] = weights.dims();
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::config(format!(
                "same-padding convolution needs odd kernels, got {kh}x{kw}"
            )));
        }
        if bias.len() != o {
            return Err(Error::config(format!(
                "bias has {} entries for {o} output channels",
                bias.len()
            )));
        }
        Ok(ConvParams { weights, bias })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> Self {
        ConvParams {
            weights: Tensor4::zeros([out_ch, in_ch, kh, kw]),
            bias: vec![0.0; out_ch],
        }
    }

    /// A zero tensor with this layer's shapes, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let [o, i, kh, kw] = self.weights.dims();
        Self::zeros(o, i, kh, kw)
    }

    pub fn out_ch(&self) -> usize {
        self.weights.n()
    }

    pub fn in_ch(&self) -> usize {
        self.weights.c()
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.h(), self.weights.w())
    }

    pub fn pad(&self) -> (usize, usize) {
        ((self.weights.h() - 1) / 2, (self.weights.w() - 1) / 2)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Size of the unrolled patch (`in_ch · kh · kw`).
    fn patch_len(&self) -> usize {
        self.weights.c() * self.weights.h() * self.weights.w()
    }
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    /// `None` when the caller did not ask for the input gradient.
    pub grad_x: Option<Tensor4>,
    pub grad_w: Tensor4,
    pub grad_b: Vec<f32>,
}

fn band_rows(patch_len: usize, h: usize, w: usize) -> usize {
    (COL_BUDGET / (patch_len * w).max(1)).clamp(1, h)
}

/// Unroll rows `y0..y1` of sample `n` into `col` (`patch_len × (y1-y0)·w`).
fn im2col_band(x: &Tensor4, n: usize, p: &ConvParams, y0: usize, y1: usize, col: &mut [f32]) {
    let [_, c, h, w] = x.dims();
    let (kh, kw) = p.kernel();
    let (ph, pw) = p.pad();
    let cols = (y1 - y0) * w;
    let mut row = 0;
    for ch in 0..c {
        let plane = x.plane(n, ch);
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut col[row * cols..(row + 1) * cols];
                // Output x positions whose source column x + kx - pw is inside the image.
                let x_lo = pw.saturating_sub(kx);
                let x_hi = (w + pw).saturating_sub(kx).min(w);
                for (r, y) in (y0..y1).enumerate() {
                    let line = &mut dst[r * w..(r + 1) * w];
                    let sy = y + ky;
                    if sy < ph || sy - ph >= h || x_lo >= x_hi {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[(sy - ph) * w..(sy - ph + 1) * w];
                    line[..x_lo].fill(0.0);
                    line[x_hi..].fill(0.0);
                    let sx0 = x_lo + kx - pw;
                    line[x_lo..x_hi].copy_from_slice(&src[sx0..sx0 + (x_hi - x_lo)]);
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add a column-gradient band back onto `grad_x` (transpose of [`im2col_band`]).
fn col2im_band(col: &[f32], p: &ConvParams, n: usize, y0: usize, y1: usize, grad_x: &mut Tensor4) {
    let [_, c, h, w] = grad_x.dims();
    let (kh, kw) = p.kernel();
    let (ph, pw) = p.pad();
    let cols = (y1 - y0) * w;
    let mut row = 0;
    for ch in 0..c {
        let plane = grad_x.plane_mut(n, ch);
        for ky in 0..kh {
            for kx in 0..kw {
                let src = &col[row * cols..(row + 1) * cols];
                let x_lo = pw.saturating_sub(kx);
                let x_hi = (w + pw).saturating_sub(kx).min(w);
                for (r, y) in (y0..y1).enumerate() {
                    let sy = y + ky;
                    if sy < ph || sy - ph >= h || x_lo >= x_hi {
                        continue;
                    }
                    let dst = &mut plane[(sy - ph) * w..(sy - ph + 1) * w];
                    let sx0 = x_lo + kx - pw;
                    let line = &src[r * w + x_lo..r * w + x_hi];
                    for (d, &g) in dst[sx0..sx0 + line.len()].iter_mut().zip(line) {
                        *d += g;
                    }
                }
                row += 1;
            }
        }
    }
}

/// `C (m×n) = alpha·A (m×k) · B (k×n) + beta·C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(m == 0 || n == 0 || c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above (checked in debug builds, guaranteed by every
    // caller's slicing) keep all strided accesses inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn check_input(x: &Tensor4, p: &ConvParams) -> Result<()> {
    if x.c() != p.in_ch() {
        return Err(Error::config(format!(
            "conv expects {} input channels, got {}",
            p.in_ch(),
            x.c()
        )));
    }
    Ok(())
}

/// `out[o] = bias[o] + Σ_i x[i] ⊛ w[o, i]`, zero padding, stride 1.
pub fn conv2d_forward(x: &Tensor4, p: &ConvParams) -> Result<Tensor4> {
    check_input(x, p)?;
    let [n, _, h, w] = x.dims();
    let o = p.out_ch();
    let hw = h * w;
    let k = p.patch_len();
    let mut out = Tensor4::zeros([n, o, h, w]);
    let rows = band_rows(k, h, w);
    let mut col = vec![0.0f32; k * rows * w];
    for b in 0..n {
        for oc in 0..o {
            out.plane_mut(b, oc).fill(p.bias[oc]);
        }
        let base = b * o * hw;
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + rows).min(h);
            let cols = (y1 - y0) * w;
            im2col_band(x, b, p, y0, y1, &mut col[..k * cols]);
            let start = base + y0 * w;
            gemm(
                o,
                k,
                cols,
                p.weights.data(),
                (k, 1),
                &col[..k * cols],
                (cols, 1),
                1.0,
                &mut out.data_mut()[start..],
                (hw, 1),
            );
            y0 = y1;
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`] given the cached input `x`.
pub fn conv2d_backward(
    grad_out: &Tensor4,
    x: &Tensor4,
    p: &ConvParams,
    want_grad_x: bool,
) -> Result<ConvGrads> {
    check_input(x, p)?;
    let [n, _, h, w] = x.dims();
    let o = p.out_ch();
    let expected = Tensor4::zeros([n, o, h, w]);
    ensure_same_dims(grad_out, &expected, "conv2d_backward")?;
    drop(expected);

    let hw = h * w;
    let k = p.patch_len();
    let mut grad_w = Tensor4::zeros(p.weights.dims());
    let mut grad_x = want_grad_x.then(|| Tensor4::zeros(x.dims()));
    let rows = band_rows(k, h, w);
    let mut col = vec![0.0f32; k * rows * w];
    let mut grad_b = vec![0.0f64; o];

    for b in 0..n {
        for (oc, gb) in grad_b.iter_mut().enumerate() {
            *gb += grad_out.plane(b, oc).iter().map(|&g| g as f64).sum::<f64>();
        }
        let base = b * o * hw;
        let mut y0 = 0;
        while y0 < h {
            let y1 = (y0 + rows).min(h);
            let cols = (y1 - y0) * w;
            let g = &grad_out.data()[base + y0 * w..];
            im2col_band(x, b, p, y0, y1, &mut col[..k * cols]);
            // grad_w (o×k) += g (o×cols) · colᵀ (cols×k)
            gemm(
                o,
                cols,
                k,
                g,
                (hw, 1),
                &col[..k * cols],
                (1, cols),
                1.0,
                grad_w.data_mut(),
                (k, 1),
            );
            if let Some(gx) = grad_x.as_mut() {
                // col_grad (k×cols) = wᵀ (k×o) · g (o×cols)
                gemm(
                    k,
                    o,
                    cols,
                    p.weights.data(),
                    (1, k),
                    g,
                    (hw, 1),
                    0.0,
                    &mut col[..k * cols],
                    (cols, 1),
                );
                col2im_band(&col[..k * cols], p, b, y0, y1, gx);
            }
            y0 = y1;
        }
    }

    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b: grad_b.into_iter().map(|v| v as f32).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_kernel_is_affine() {
        let x = Tensor4::filled([1, 1, 3, 3], 1.0);
        let p = ConvParams::new(Tensor4::filled([1, 1, 1, 1], 2.0), vec![0.5]).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor4::from_fn([2, 1, 5, 4], |[n, _, y, x]| (n * 20 + y * 4 + x) as f32);
        let mut wt = Tensor4::zeros([1, 1, 3, 3]);
        wt.set(0, 0, 1, 1, 1.0);
        let p = ConvParams::new(wt, vec![0.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn preserves_spatial_dims_for_odd_kernels() {
        for k in [1, 3, 5, 7] {
            let x = Tensor4::filled([1, 2, 9, 6], 0.3);
            let p = ConvParams::zeros(3, 2, k, k);
            assert_eq!(conv2d_forward(&x, &p).unwrap().dims(), [1, 3, 9, 6]);
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_even_kernels() {
        let x = Tensor4::zeros([1, 3, 4, 4]);
        let p = ConvParams::zeros(1, 2, 3, 3);
        assert!(matches!(conv2d_forward(&x, &p), Err(Error::Config(_))));
        assert!(ConvParams::new(Tensor4::zeros([1, 1, 2, 2]), vec![0.0]).is_err());
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let x = Tensor4::from_fn([1, 2, 4, 4], |[_, c, y, x]| (c + y * x) as f32 * 0.1);
        let p = ConvParams::new(Tensor4::filled([3, 2, 3, 3], 0.2), vec![0.1; 3]).unwrap();
        let g = conv2d_backward(&Tensor4::zeros([1, 3, 4, 4]), &x, &p, true).unwrap();
        assert!(g.grad_x.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.grad_w.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_grad_counts_output_positions() {
        let x = Tensor4::filled([2, 1, 3, 5], 1.0);
        let p = ConvParams::zeros(4, 1, 3, 3);
        let g = conv2d_backward(&Tensor4::filled([2, 4, 3, 5], 1.0), &x, &p, false).unwrap();
        assert!(g.grad_x.is_none());
        assert!(g.grad_b.iter().all(|&v| v == 30.0));
    }

    #[test]
    fn banding_matches_single_band() {
        // A tall image forces several bands; compare with a copy small enough for one.
        let p = ConvParams::new(
            Tensor4::from_fn([2, 3, 3, 3], |[o, i, y, x]| {
                ((o + 2 * i + y) as f32 - x as f32) * 0.05
            }),
            vec![0.1, -0.2],
        )
        .unwrap();
        let h = COL_BUDGET / (p.patch_len() * 4) * 2 + 3;
        let x = Tensor4::from_fn([1, 3, h, 4], |[_, c, y, x]| {
            ((c * 7 + y * 3 + x) % 11) as f32 * 0.1
        });
        let full = conv2d_forward(&x, &p).unwrap();
        assert!(band_rows(p.patch_len(), h, 4) < h);
        for y in [0, h / 2, h - 1] {
            for xx in 0..4 {
                let mut acc = p.bias[1] as f64;
                for c in 0..3 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as isize + ky as isize - 1;
                            let sx = xx as isize + kx as isize - 1;
                            if sy >= 0 && (sy as usize) < h && (0..4).contains(&sx) {
                                acc += (x.get(0, c, sy as usize, sx as usize)
                                    * p.weights.get(1, c, ky, kx))
                                    as f64;
                            }
                        }
                    }
                }
                assert!((full.get(0, 1, y, xx) as f64 - acc).abs() < 1e-5);
            }
        }
    }
}
