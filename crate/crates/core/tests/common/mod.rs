//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric kernels.
#![allow(dead_code)]

pub mod gradcheck;

use pyramid_count::tensor::{ConvParams, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(r: &mut impl Rng, dims: [usize; 4], lo: f32, hi: f32) -> Tensor4 {
    Tensor4::from_fn(dims, |_| r.random_range(lo..hi))
}

pub fn random_conv(
    r: &mut impl Rng,
    out_ch: usize,
    in_ch: usize,
    kh: usize,
    kw: usize,
) -> ConvParams {
    let mut p = ConvParams::zeros(out_ch, in_ch, kh, kw);
    for v in p.weights.data_mut() {
        *v = r.random_range(-0.5..0.5);
    }
    for v in p.bias.iter_mut() {
        *v = r.random_range(-0.5..0.5);
    }
    p
}

/// Direct "same"-padded cross-correlation with f64 accumulation.
pub fn conv_ref(x: &Tensor4, p: &ConvParams) -> Vec<f64> {
    let wide = |v: &[f32]| v.iter().map(|&a| a as f64).collect::<Vec<f64>>();
    conv_ref64(
        &wide(x.data()),
        x.dims(),
        &wide(p.weights.data()),
        p.weights.dims(),
        &wide(&p.bias),
    )
}

/// [`conv_ref`] on f64 buffers, so finite differences can perturb in double.
pub fn conv_ref64(x: &[f64], xd: [usize; 4], wt: &[f64], wd: [usize; 4], bias: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = xd;
    let [o, _, kh, kw] = wd;
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let mut out = vec![0.0; n * o * h * w];
    for b in 0..n {
        for oc in 0..o {
            for y in 0..h {
                for xx in 0..w {
                    let mut s = bias[oc];
                    for ic in 0..c {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let sy = y as isize + dy as isize - ph;
                                let sx = xx as isize + dx as isize - pw;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                s += wt[((oc * c + ic) * kh + dy) * kw + dx]
                                    * x[((b * c + ic) * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[((b * o + oc) * h + y) * w + xx] = s;
                }
            }
        }
    }
    out
}

/// Central difference in f64 of `f` w.r.t. `data[i]` with step `eps`.
pub fn central_diff64(
    data: &mut [f64],
    i: usize,
    eps: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = data[i];
    data[i] = orig + eps;
    let plus = f(data);
    data[i] = orig - eps;
    let minus = f(data);
    data[i] = orig;
    (plus - minus) / (2.0 * eps)
}

/// `Σ r_i y_i` in f64.
pub fn dot(r: &[f64], y: &Tensor4) -> f64 {
    r.iter().zip(y.data()).map(|(a, &b)| a * b as f64).sum()
}

pub fn random_weights(r: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Central difference of `f` w.r.t. `data[i]` with step `eps`.
pub fn central_diff(data: &mut [f32], i: usize, eps: f32, mut f: impl FnMut(&[f32]) -> f64) -> f64 {
    let orig = data[i];
    data[i] = orig + eps;
    let plus = f(data);
    data[i] = orig - eps;
    let minus = f(data);
    data[i] = orig;
    (plus - minus) / (2.0 * eps as f64)
}

/// Relative error with a small absolute floor so that gradients that are
/// zero analytically are compared absolutely: `|a−n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Brute-force mean distance to the `k` nearest other points.
pub fn knn_ref(points: &[(f64, f64)], k: usize) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &(a, b))| ((a - x).powi(2) + (b - y).powi(2)).sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            let kk = k.min(d.len());
            d[..kk].iter().sum::<f64>() / kk as f64
        })
        .collect()
}

/// Scalar Adam, textbook form.
pub struct ScalarAdam {
    m: f64,
    v: f64,
    t: i32,
}

impl ScalarAdam {
    pub fn new() -> Self {
        ScalarAdam {
            m: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn step(&mut self, w: f64, g: f64, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        self.t += 1;
        self.m = b1 * self.m + (1.0 - b1) * g;
        self.v = b2 * self.v + (1.0 - b2) * g * g;
        let mh = self.m / (1.0 - b1.powi(self.t));
        let vh = self.v / (1.0 - b2.powi(self.t));
        w - lr * mh / (vh.sqrt() + eps)
    }
}

/// Unnormalised Gaussian window sum for one point, evaluated by brute force
/// over the whole image (no truncation), for comparing kernel shapes.
pub fn gaussian_ref(h: usize, w: usize, cx: f64, cy: f64, sigma: f64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            out[y * w + x] = (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
    out
}

/// Sum of non-overlapping 4×4 windows, zero-padded, by brute force.
pub fn window_sums_ref(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h.div_ceil(4), w.div_ceil(4));
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = 0.0;
            for y in oy * 4..(oy * 4 + 4).min(h) {
                for x in ox * 4..(ox * 4 + 4).min(w) {
                    s += data[y * w + x];
                }
            }
            out[oy * ow + ox] = s;
        }
    }
    out
}

/// Softmax across a list of per-pixel logits, in f64.
pub fn softmax_ref(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}
