//! Finite-difference checks of every differentiable op. Each `check_*`
//! builds one random micro-instance and returns the largest relative error
//! over all checked coordinates.

use pyramid_count::network::{FusionMode, NetworkConfig, PyramidModel};
use pyramid_count::tensor::*;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{
    central_diff, central_diff64, conv_ref64, dot, random_conv, random_tensor, random_weights,
    rel_err, rng,
};

pub const EPS: f32 = 1e-3;
/// Denominator floor for the relative error (see [`rel_err`]).
pub const FLOOR: f64 = 1e-2;

fn seed_tensor(r: &[f64], dims: [usize; 4]) -> Tensor4 {
    Tensor4::new(dims, r.iter().map(|&v| v as f32).collect()).unwrap()
}

fn worst(errs: impl IntoIterator<Item = f64>) -> f64 {
    errs.into_iter().fold(0.0, f64::max)
}

/// Values bounded away from 0 so ReLU kinks are not crossed by ±EPS.
fn away_from_zero(r: &mut impl Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_| {
        let v: f32 = r.random_range(0.05..1.0);
        if r.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

pub fn check_conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let k = [1, 3, 5][r.random_range(0..3)];
    let kw = [1, 3, 5][r.random_range(0..3)];
    let dims = [
        r.random_range(1..3),
        r.random_range(1..4),
        r.random_range(2..7),
        r.random_range(2..7),
    ];
    let out_ch = r.random_range(1..4);
    let x = random_tensor(&mut r, dims, -1.0, 1.0);
    let p = random_conv(&mut r, out_ch, dims[1], k, kw);
    let y = conv2d_forward(&x, &p).unwrap();
    let w = random_weights(&mut r, y.len());
    let g = conv2d_backward(&seed_tensor(&w, y.dims()), &x, &p, true).unwrap();
    let mut errs = Vec::new();

    // Numeric side runs the f64 reference forward so roundoff stays far below
    // the tolerance.
    let wide = |v: &[f32]| v.iter().map(|&a| a as f64).collect::<Vec<f64>>();
    let (mut xs, mut ws, mut bs) = (wide(x.data()), wide(p.weights.data()), wide(&p.bias));
    let wdims = p.weights.dims();
    let objective = |y: Vec<f64>| -> f64 { y.iter().zip(&w).map(|(a, b)| a * b).sum() };
    let gx = g.grad_x.unwrap();
    for i in 0..xs.len() {
        let (wv, bv) = (ws.clone(), bs.clone());
        let n = central_diff64(&mut xs, i, EPS as f64, |d| {
            objective(conv_ref64(d, dims, &wv, wdims, &bv))
        });
        errs.push(rel_err(gx.data()[i] as f64, n, FLOOR));
    }
    for i in 0..ws.len() {
        let (xv, bv) = (xs.clone(), bs.clone());
        let n = central_diff64(&mut ws, i, EPS as f64, |d| {
            objective(conv_ref64(&xv, dims, d, wdims, &bv))
        });
        errs.push(rel_err(g.grad_w.data()[i] as f64, n, FLOOR));
    }
    for i in 0..bs.len() {
        let (xv, wv) = (xs.clone(), ws.clone());
        let n = central_diff64(&mut bs, i, EPS as f64, |d| {
            objective(conv_ref64(&xv, dims, &wv, wdims, d))
        });
        errs.push(rel_err(g.grad_b[i] as f64, n, FLOOR));
    }
    worst(errs)
}

fn check_unary(x: Tensor4, w: &[f64], fwd: impl Fn(&Tensor4) -> Tensor4, analytic: Tensor4) -> f64 {
    let dims = x.dims();
    let mut xd = x.data().to_vec();
    worst((0..xd.len()).map(|i| {
        let n = central_diff(&mut xd, i, EPS, |d| {
            dot(w, &fwd(&Tensor4::new(dims, d.to_vec()).unwrap()))
        });
        rel_err(analytic.data()[i] as f64, n, FLOOR)
    }))
}

fn small_dims(r: &mut impl Rng) -> [usize; 4] {
    [
        r.random_range(1..3),
        r.random_range(1..4),
        r.random_range(1..6),
        r.random_range(1..6),
    ]
}

pub fn check_leaky_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let x = away_from_zero(&mut r, dims);
    let w = random_weights(&mut r, x.len());
    let g = leaky_relu_backward(&seed_tensor(&w, dims), &x, LEAKY_SLOPE).unwrap();
    check_unary(x, &w, |t| leaky_relu(t, LEAKY_SLOPE), g)
}

pub fn check_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let x = away_from_zero(&mut r, dims);
    let w = random_weights(&mut r, x.len());
    let g = relu_backward(&seed_tensor(&w, dims), &relu(&x)).unwrap();
    check_unary(x, &w, relu, g)
}

pub fn check_maxpool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = [
        r.random_range(1..3),
        r.random_range(1..3),
        r.random_range(2..8),
        r.random_range(2..8),
    ];
    // Distinct values 0.01 apart: no window has a near-tie within ±EPS.
    let n: usize = dims.iter().product();
    let mut vals: Vec<f32> = (0..n).map(|i| i as f32 * 0.01 - 0.3).collect();
    vals.shuffle(&mut r);
    let x = Tensor4::new(dims, vals).unwrap();
    let (y, arg) = maxpool2x2_forward(&x).unwrap();
    let w = random_weights(&mut r, y.len());
    let g = maxpool2x2_backward(&seed_tensor(&w, y.dims()), &arg, dims).unwrap();
    check_unary(x, &w, |t| maxpool2x2_forward(t).unwrap().0, g)
}

pub fn check_resize(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let (th, tw) = (r.random_range(1..9), r.random_range(1..9));
    let x = random_tensor(&mut r, dims, -1.0, 1.0);
    let w = random_weights(&mut r, dims[0] * dims[1] * th * tw);
    let g = bilinear_resize_backward(
        &seed_tensor(&w, [dims[0], dims[1], th, tw]),
        dims[2],
        dims[3],
    )
    .unwrap();
    check_unary(x, &w, |t| bilinear_resize(t, th, tw).unwrap(), g)
}

pub fn check_upsample(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let (th, tw) = (
        dims[2] + r.random_range(0..5),
        dims[3] + r.random_range(0..5),
    );
    let x = random_tensor(&mut r, dims, -1.0, 1.0);
    let w = random_weights(&mut r, dims[0] * dims[1] * th * tw);
    let g = bilinear_resize_backward(
        &seed_tensor(&w, [dims[0], dims[1], th, tw]),
        dims[2],
        dims[3],
    )
    .unwrap();
    check_unary(x, &w, |t| bilinear_upsample(t, th, tw).unwrap(), g)
}

fn check_multi(
    xs: Vec<Tensor4>,
    w: &[f64],
    fwd: impl Fn(&[Tensor4]) -> Tensor4,
    analytic: Vec<Tensor4>,
) -> f64 {
    let mut errs = Vec::new();
    for s in 0..xs.len() {
        let mut d = xs[s].data().to_vec();
        for i in 0..d.len() {
            let n = central_diff(&mut d, i, EPS, |v| {
                let mut cur = xs.clone();
                cur[s] = Tensor4::new(xs[s].dims(), v.to_vec()).unwrap();
                dot(w, &fwd(&cur))
            });
            errs.push(rel_err(analytic[s].data()[i] as f64, n, FLOOR));
        }
    }
    worst(errs)
}

pub fn check_softmax(seed: u64) -> f64 {
    let mut r = rng(seed);
    let s = r.random_range(1..5);
    // Batch 1 so the channel concat below is laid out scale-major, like `w`.
    let dims = [1, 1, r.random_range(1..5), r.random_range(1..5)];
    let xs: Vec<Tensor4> = (0..s)
        .map(|_| random_tensor(&mut r, dims, -2.0, 2.0))
        .collect();
    let ys = softmax_across_scales(&xs).unwrap();
    let per = ys[0].len();
    let w = random_weights(&mut r, per * s);
    let gs: Vec<Tensor4> = (0..s)
        .map(|k| seed_tensor(&w[k * per..(k + 1) * per], dims))
        .collect();
    let analytic = softmax_across_scales_backward(&gs, &ys).unwrap();
    check_multi(
        xs,
        &w,
        |cur| concat_channels(&softmax_across_scales(cur).unwrap()).unwrap(),
        analytic,
    )
}

pub fn check_mul(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let a = random_tensor(&mut r, dims, -1.0, 1.0);
    let b = random_tensor(&mut r, dims, -1.0, 1.0);
    let w = random_weights(&mut r, a.len());
    let (ga, gb) = elementwise_mul_backward(&seed_tensor(&w, dims), &a, &b).unwrap();
    check_multi(
        vec![a, b],
        &w,
        |c| elementwise_mul(&c[0], &c[1]).unwrap(),
        vec![ga, gb],
    )
}

pub fn check_concat(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, h, w_) = (
        r.random_range(1..3),
        r.random_range(1..5),
        r.random_range(1..5),
    );
    let chans: Vec<usize> = (0..r.random_range(1..4))
        .map(|_| r.random_range(1..3))
        .collect();
    let xs: Vec<Tensor4> = chans
        .iter()
        .map(|&c| random_tensor(&mut r, [n, c, h, w_], -1.0, 1.0))
        .collect();
    let total: usize = chans.iter().sum();
    let w = random_weights(&mut r, n * total * h * w_);
    let analytic = split_channels(&seed_tensor(&w, [n, total, h, w_]), &chans).unwrap();
    check_multi(xs, &w, |c| concat_channels(c).unwrap(), analytic)
}

pub fn check_sum(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let xs: Vec<Tensor4> = (0..r.random_range(1..4))
        .map(|_| random_tensor(&mut r, dims, -1.0, 1.0))
        .collect();
    let w = random_weights(&mut r, xs[0].len());
    let g = seed_tensor(&w, dims);
    let analytic = vec![g; xs.len()];
    check_multi(xs, &w, |c| add_all(c).unwrap(), analytic)
}

pub fn check_mse(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = small_dims(&mut r);
    let p = random_tensor(&mut r, dims, -1.0, 1.0);
    let t = random_tensor(&mut r, dims, -1.0, 1.0);
    let g = mse_loss_backward(&p, &t).unwrap();
    let mut d = p.data().to_vec();
    worst((0..d.len()).map(|i| {
        let n = central_diff(&mut d, i, EPS, |v| {
            mse_loss(&Tensor4::new(dims, v.to_vec()).unwrap(), &t).unwrap()
        });
        rel_err(g.data()[i] as f64, n, FLOOR)
    }))
}

pub type OpCheck = fn(u64) -> f64;

pub const OP_CHECKS: &[(&str, OpCheck)] = &[
    ("conv", check_conv),
    ("leaky_relu", check_leaky_relu),
    ("relu", check_relu),
    ("maxpool", check_maxpool),
    ("resize", check_resize),
    ("upsample", check_upsample),
    ("softmax", check_softmax),
    ("mul", check_mul),
    ("concat", check_concat),
    ("sum", check_sum),
    ("mse", check_mse),
];

fn param_slot(m: &mut PyramidModel, pi: usize, is_bias: bool, i: usize) -> &mut f32 {
    let p = &mut m.params_mut()[pi];
    if is_bias {
        &mut p.bias[i]
    } else {
        &mut p.weights.data_mut()[i]
    }
}

/// Full 2-scale adaptive pipeline: analytic vs numeric gradient for
/// `n_params` randomly chosen scalar parameters. Returns per-parameter
/// `(name, analytic, numeric, rel_err)`.
pub fn check_pipeline(seed: u64, n_params: usize) -> Vec<(String, f64, f64, f64)> {
    let mut r = rng(seed);
    let cfg = NetworkConfig::from_stack("grad-net", &[(4, 3), (6, 3), (6, 3), (1, 3)], &[1, 2]);
    let mut model = PyramidModel::build(&cfg, &[1.0, 0.6], FusionMode::Adaptive, seed).unwrap();
    // Non-zero biases so no unit starts exactly at a kink.
    for p in model.params_mut() {
        for b in p.bias.iter_mut() {
            *b = r.random_range(0.05..0.3);
        }
    }
    let x = random_tensor(&mut r, [1, 1, 16, 16], 0.0, 1.0);
    let mut tape = Tape::recording();
    let out = model.forward_on(&mut tape, &x).unwrap();
    let dims = out.fused.value().dims();
    let w = random_weights(&mut r, out.fused.value().len());
    let mut grads = model.zero_grads();
    tape.backward(
        &out.fused,
        seed_tensor(&w, dims),
        model.params(),
        &mut grads,
    )
    .unwrap();

    let names = model.param_names();
    let mut all: Vec<(usize, bool, usize)> = Vec::new();
    for (pi, p) in model.params().iter().enumerate() {
        all.extend((0..p.weights.len()).map(|i| (pi, false, i)));
        all.extend((0..p.bias.len()).map(|i| (pi, true, i)));
    }
    all.shuffle(&mut r);
    all.truncate(n_params);
    all.into_iter()
        .map(|(pi, is_bias, i)| {
            let analytic = if is_bias {
                grads[pi].bias[i]
            } else {
                grads[pi].weights.data()[i]
            } as f64;
            let eval = |m: &PyramidModel| dot(&w, m.forward(&x).unwrap().fused.value());
            let mut m = model.clone();
            let orig = *param_slot(&mut m, pi, is_bias, i);
            *param_slot(&mut m, pi, is_bias, i) = orig + EPS;
            let plus = eval(&m);
            *param_slot(&mut m, pi, is_bias, i) = orig - EPS;
            let minus = eval(&m);
            let numeric = (plus - minus) / (2.0 * EPS as f64);
            let kind = if is_bias { "bias" } else { "weight" };
            (
                format!("{}.{kind}[{i}]", names[pi]),
                analytic,
                numeric,
                rel_err(analytic, numeric, FLOOR),
            )
        })
        .collect()
}
