use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use pyramid_count::evaluation::predict_full;
use pyramid_count::image::GrayImage;
use pyramid_count::network::{FusionMode, PyramidModel};
use pyramid_count_ffi::*;

fn preset(name: &str, fusion: PcFusion) -> *mut PcModel {
    let name = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    let st = unsafe { pc_model_preset(name.as_ptr(), ptr::null(), 2, fusion, 7, &mut m) };
    assert_eq!(st, PcStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = pc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn predict_matches_library() {
    let m = preset("FCN-5c-small", PcFusion::Adaptive);
    let (h, w) = (37usize, 50usize);
    let pixels: Vec<u8> = (0..h * w).map(|i| (i * 31 % 256) as u8).collect();
    let (mut oh, mut ow) = (0, 0);
    assert_eq!(
        unsafe { pc_output_dims(h, w, &mut oh, &mut ow) },
        PcStatus::Ok
    );
    let mut density = vec![0f32; oh * ow];
    let mut count = 0.0;
    let st = unsafe {
        pc_predict(
            m,
            pixels.as_ptr(),
            h,
            w,
            density.as_mut_ptr(),
            density.len(),
            &mut count,
        )
    };
    assert_eq!(st, PcStatus::Ok);

    let reference =
        PyramidModel::preset("FCN-5c-small", &[1.0, 0.7], FusionMode::Adaptive, 7).unwrap();
    let d = predict_full(&reference, &GrayImage::new(w, h, pixels.clone()).unwrap()).unwrap();
    assert!((count - d.total()).abs() < 1e-9);
    for (a, b) in density.iter().zip(&d.data) {
        assert!((*a as f64 - b).abs() <= 1e-6 * b.abs().max(1.0));
    }

    let mut short = vec![0f32; 3];
    let st = unsafe {
        pc_predict(
            m,
            pixels.as_ptr(),
            h,
            w,
            short.as_mut_ptr(),
            short.len(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, PcStatus::BufferTooSmall);
    assert!(last_error().contains("density"), "{}", last_error());
    unsafe { pc_model_free(m) };
}

#[test]
fn save_load_round_trip_and_introspection() {
    let m = preset("FCN-5c", PcFusion::Adaptive);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.pyrd").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { pc_model_save(m, path.as_ptr()) }, PcStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(
        unsafe { pc_model_load(path.as_ptr(), &mut loaded) },
        PcStatus::Ok
    );
    let (mut pc, mut rf, mut ns) = (0, 0, 0);
    unsafe {
        assert_eq!(pc_model_param_count(loaded, &mut pc), PcStatus::Ok);
        assert_eq!(pc_model_receptive_field(loaded, &mut rf), PcStatus::Ok);
        assert_eq!(pc_model_num_scales(loaded, &mut ns), PcStatus::Ok);
        pc_model_free(loaded);
        pc_model_free(m);
    }
    assert_eq!((pc, rf, ns), (52_821, 40, 2));
}

#[test]
fn errors_are_reported_with_codes() {
    let mut out = 0usize;
    let bad = CString::new("FCN-99c").unwrap();
    assert_eq!(
        unsafe { pc_preset_receptive_field(bad.as_ptr(), &mut out) },
        PcStatus::Config
    );
    assert!(last_error().contains("FCN-99c"));
    assert_eq!(
        unsafe { pc_preset_receptive_field(ptr::null(), &mut out) },
        PcStatus::NullPointer
    );
    let missing = CString::new("/nonexistent/m.pyrd").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { pc_model_load(missing.as_ptr(), &mut m) },
        PcStatus::Io
    );
    assert!(m.is_null());
    assert_eq!(
        unsafe {
            pc_metrics(
                ptr::null(),
                ptr::null(),
                0,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
            )
        },
        PcStatus::Input
    );
}

#[test]
fn density_and_metrics_entry_points() {
    let xy = [10.0, 12.0, 30.5, 20.0, 31.0, 22.0];
    let (h, w) = (32, 48);
    let mut fixed = vec![0.0; h * w];
    let mut adaptive = vec![0.0; h * w];
    unsafe {
        assert_eq!(
            pc_density_fixed(xy.as_ptr(), 3, h, w, 2.0, fixed.as_mut_ptr(), fixed.len()),
            PcStatus::Ok
        );
        assert_eq!(
            pc_density_adaptive(
                xy.as_ptr(),
                3,
                h,
                w,
                2,
                0.3,
                adaptive.as_mut_ptr(),
                adaptive.len()
            ),
            PcStatus::Ok
        );
    }
    assert!((fixed.iter().sum::<f64>() - 3.0).abs() < 1e-9);
    assert!((adaptive.iter().sum::<f64>() - 3.0).abs() < 1e-9);

    let (gt, pred) = ([3.0, 5.0], [4.0, 7.0]);
    let (mut mae, mut mse, mut rmse) = (0.0, 0.0, 0.0);
    let st = unsafe { pc_metrics(gt.as_ptr(), pred.as_ptr(), 2, &mut mae, &mut mse, &mut rmse) };
    assert_eq!(st, PcStatus::Ok);
    assert_eq!((mae, mse), (1.5, 2.5));
    assert!((rmse - 2.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pyramid_count.h"),
    )
    .unwrap();
    for sym in [
        "pc_model_preset",
        "pc_predict",
        "pc_model_free",
        "pc_last_error",
        "PC_STATUS_BUFFER_TOO_SMALL",
        "size_t",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
    // Compile the header as C when a compiler is available.
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-x", "c", "-"])
        .stdin(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            use std::io::Write;
            let src = format!(
                "#include \"{}/include/pyramid_count.h\"\nint main(void) {{ return 0; }}\n",
                env!("CARGO_MANIFEST_DIR")
            );
            child.stdin.take().unwrap().write_all(src.as_bytes())?;
            child.wait_with_output()
        })
    {
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
