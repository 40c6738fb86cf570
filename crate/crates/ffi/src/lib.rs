//! C ABI over `pyramid_count`.
//!
//! Every fallible function returns a [`PcStatus`] code; on failure the
//! message is available from [`pc_last_error`] until the next call on the
//! same thread. Models are opaque [`PcModel`] handles released with
//! [`pc_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pyramid_count::density::{generate_adaptive, generate_fixed, AdaptiveKernel, PointAnnotations};
use pyramid_count::evaluation::{mae, mse, predict_full};
use pyramid_count::image::GrayImage;
use pyramid_count::network::{load_weights, receptive_field, save_weights};
use pyramid_count::{Error, FusionMode, NetworkConfig, PyramidModel};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Input = 3,
    Shape = 4,
    Load = 5,
    Io = 6,
    Precondition = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Fusion mode codes, matching the weight-file encoding.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcFusion {
    Adaptive = 0,
    Fixed = 1,
    NoSoftmax = 2,
    Sum = 3,
    Single = 4,
}

impl From<PcFusion> for FusionMode {
    fn from(f: PcFusion) -> Self {
        FusionMode::from_code(f as u8).expect("every PcFusion has a code")
    }
}

/// Opaque model handle.
pub struct PcModel {
    inner: PyramidModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PcStatus {
    match e {
        Error::Config(_) => PcStatus::Config,
        Error::Input(_) | Error::Json(_) => PcStatus::Input,
        Error::Shape(_) => PcStatus::Shape,
        Error::Load(_) => PcStatus::Load,
        Error::Io(_) => PcStatus::Io,
        Error::Precondition(_) | Error::Diverged(_) => PcStatus::Precondition,
    }
}

struct Fail(PcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PcStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            PcStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PcStatus::Input, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_arg<'a>(m: *const PcModel) -> Result<&'a PyramidModel, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn pc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Build a freshly initialised preset model. `scales` may be NULL to use the
/// default pyramid for `n_scales` levels.
///
/// # Safety
/// `name` must be a NUL-terminated string; `scales` must point to `n_scales`
/// floats or be NULL; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_model_preset(
    name: *const c_char,
    scales: *const f32,
    n_scales: usize,
    fusion: PcFusion,
    seed: u64,
    out: *mut *mut PcModel,
) -> PcStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let scales = if scales.is_null() {
            pyramid_count::network::default_scales(n_scales)?
        } else {
            slice_arg(scales, n_scales, "scales")?.to_vec()
        };
        let model = PyramidModel::preset(name, &scales, fusion.into(), seed)?;
        write_out(
            out,
            Box::into_raw(Box::new(PcModel { inner: model })),
            "out",
        )
    })
}

/// Load a weight file whose config is a built-in preset.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pc_model_load(path: *const c_char, out: *mut *mut PcModel) -> PcStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = load_weights(Path::new(path))?;
        write_out(
            out,
            Box::into_raw(Box::new(PcModel { inner: model })),
            "out",
        )
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pc_model_save(model: *const PcModel, path: *const c_char) -> PcStatus {
    guard(|| {
        let m = model_arg(model)?;
        save_weights(m, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pc_model_free(model: *mut PcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pc_model_param_count(model: *const PcModel, out: *mut usize) -> PcStatus {
    guard(|| write_out(out, model_arg(model)?.count_parameters(), "out"))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pc_model_receptive_field(
    model: *const PcModel,
    out: *mut usize,
) -> PcStatus {
    guard(|| write_out(out, receptive_field(model_arg(model)?.config()), "out"))
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pc_model_num_scales(model: *const PcModel, out: *mut usize) -> PcStatus {
    guard(|| write_out(out, model_arg(model)?.scales().len(), "out"))
}

/// Receptive field of a preset backbone by name.
///
/// # Safety
/// `name` must be NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pc_preset_receptive_field(
    name: *const c_char,
    out: *mut usize,
) -> PcStatus {
    guard(|| {
        let cfg = NetworkConfig::preset(str_arg(name, "name")?)?;
        write_out(out, receptive_field(&cfg), "out")
    })
}

/// Side lengths of the density map produced for an `h × w` image.
///
/// # Safety
/// `out_h` and `out_w` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pc_output_dims(
    h: usize,
    w: usize,
    out_h: *mut usize,
    out_w: *mut usize,
) -> PcStatus {
    guard(|| {
        write_out(out_h, h.div_ceil(4), "out_h")?;
        write_out(out_w, w.div_ceil(4), "out_w")
    })
}

/// Predict on a row-major 8-bit grayscale image. The density map
/// (`ceil(h/4) × ceil(w/4)`, row-major) is written to `density` when it is
/// not NULL; `density_len` must then be at least that size. The count is
/// written to `count` when it is not NULL.
///
/// # Safety
/// `pixels` must hold `h * w` bytes; `density` must hold `density_len` floats.
#[no_mangle]
pub unsafe extern "C" fn pc_predict(
    model: *const PcModel,
    pixels: *const u8,
    h: usize,
    w: usize,
    density: *mut f32,
    density_len: usize,
    count: *mut f64,
) -> PcStatus {
    guard(|| {
        let m = model_arg(model)?;
        let px = slice_arg(pixels, h * w, "pixels")?;
        let img = GrayImage::new(w, h, px.to_vec())?;
        let need = h.div_ceil(4) * w.div_ceil(4);
        if !density.is_null() && density_len < need {
            return Err(Fail(
                PcStatus::BufferTooSmall,
                format!("density buffer holds {density_len} values, {need} needed"),
            ));
        }
        let d = predict_full(m, &img)?;
        if !density.is_null() {
            let out = std::slice::from_raw_parts_mut(density, need);
            for (o, &v) in out.iter_mut().zip(&d.data) {
                *o = v as f32;
            }
        }
        if !count.is_null() {
            *count = d.total();
        }
        Ok(())
    })
}

unsafe fn density_common(
    xy: *const f64,
    n_points: usize,
    h: usize,
    w: usize,
    out: *mut f64,
    out_len: usize,
    build: impl FnOnce(&PointAnnotations) -> pyramid_count::Result<pyramid_count::density::DensityMap>,
) -> Result<(), Fail> {
    let coords = slice_arg(xy, 2 * n_points, "xy")?;
    if h == 0 || w == 0 {
        return Err(Fail(PcStatus::Input, "image dims must be non-zero".into()));
    }
    if out.is_null() {
        return Err(null("out"));
    }
    if out_len < h * w {
        return Err(Fail(
            PcStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {} needed", h * w),
        ));
    }
    let pts = coords.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let d = build(&PointAnnotations::new(pts, h, w)?)?;
    std::slice::from_raw_parts_mut(out, h * w).copy_from_slice(&d.data);
    Ok(())
}

/// Fixed-σ ground-truth density for `n_points` `(x, y)` pairs into a
/// row-major `h × w` buffer.
///
/// # Safety
/// `xy` must hold `2 * n_points` doubles; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pc_density_fixed(
    xy: *const f64,
    n_points: usize,
    h: usize,
    w: usize,
    sigma: f64,
    out: *mut f64,
    out_len: usize,
) -> PcStatus {
    guard(|| {
        density_common(xy, n_points, h, w, out, out_len, |a| {
            generate_fixed(a, sigma)
        })
    })
}

/// Geometry-adaptive density (σ = β · mean kNN distance).
///
/// # Safety
/// As [`pc_density_fixed`].
#[no_mangle]
pub unsafe extern "C" fn pc_density_adaptive(
    xy: *const f64,
    n_points: usize,
    h: usize,
    w: usize,
    k: usize,
    beta: f64,
    out: *mut f64,
    out_len: usize,
) -> PcStatus {
    let params = AdaptiveKernel {
        k,
        beta,
        ..AdaptiveKernel::default()
    };
    guard(|| {
        density_common(xy, n_points, h, w, out, out_len, |a| {
            generate_adaptive(a, &params)
        })
    })
}

/// MAE, MSE and RMSE of `n` count pairs. Any output pointer may be NULL.
///
/// # Safety
/// `gt` and `pred` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pc_metrics(
    gt: *const f64,
    pred: *const f64,
    n: usize,
    out_mae: *mut f64,
    out_mse: *mut f64,
    out_rmse: *mut f64,
) -> PcStatus {
    guard(|| {
        let g = slice_arg(gt, n, "gt")?;
        let p = slice_arg(pred, n, "pred")?;
        let a = mae(g, p)?;
        let s = mse(g, p)?;
        for (o, v) in [(out_mae, a), (out_mse, s), (out_rmse, s.sqrt())] {
            if !o.is_null() {
                *o = v;
            }
        }
        Ok(())
    })
}
