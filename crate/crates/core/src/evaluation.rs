//! Full-image inference, counting metrics and throughput measurement.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::density::DensityMap;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::network::{scaled_dims, PyramidModel};
use crate::training::Sample;

/// Training-time multiplier on ground-truth densities; predictions are
/// divided by it so that maps integrate to counts.
pub const DENSITY_SCALE: f64 = 100.0;

/// Padded dims for an `h × w` input: multiples of 4, and large enough that
/// every pyramid level is at least 4×4.
pub fn padded_dims(model: &PyramidModel, h: usize, w: usize) -> (usize, usize) {
    let (mut ph, mut pw) = (h.div_ceil(4) * 4, w.div_ceil(4) * 4);
    let smallest = model.scales().iter().copied().fold(1.0f32, f32::min);
    while scaled_dims(ph, pw, smallest).0 < 4 {
        ph += 4;
    }
    while scaled_dims(ph, pw, smallest).1 < 4 {
        pw += 4;
    }
    (ph, pw)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Count density at 1/4 resolution, `(⌈h/4⌉, ⌈w/4⌉)`.
    pub density: DensityMap,
    /// Per-scale attention weights on the same grid (empty for modes without attention).
    pub attention: Vec<DensityMap>,
}

impl Prediction {
    pub fn count(&self) -> f64 {
        self.density.total()
    }
}

/// Predict with maps divided by `density_scale`.
pub fn predict_detailed(
    model: &PyramidModel,
    image: &GrayImage,
    density_scale: f64,
) -> Result<Prediction> {
    let (ph, pw) = padded_dims(model, image.height, image.width);
    let input = image.pad_to(ph, pw).to_tensor();
    let out = model.forward(&input)?;
    let (oh, ow) = (image.height.div_ceil(4), image.width.div_ceil(4));
    let density =
        DensityMap::from_tensor_plane(out.fused.value(), 0, 4, density_scale).crop(0, 0, oh, ow);
    let attention = out
        .attention
        .iter()
        .map(|a| DensityMap::from_tensor_plane(a, 0, 4, 1.0).crop(0, 0, oh, ow))
        .collect();
    Ok(Prediction { density, attention })
}

/// Density map at scale factor 4 whose sum is the predicted count.
pub fn predict_full(model: &PyramidModel, image: &GrayImage) -> Result<DensityMap> {
    Ok(predict_detailed(model, image, DENSITY_SCALE)?.density)
}

fn check_pairs(gt: &[f64], pred: &[f64]) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::input("metrics need at least one image"));
    }
    if gt.len() != pred.len() {
        return Err(Error::input(format!(
            "{} ground-truth counts but {} predictions",
            gt.len(),
            pred.len()
        )));
    }
    Ok(())
}

pub fn mae(gt: &[f64], pred: &[f64]) -> Result<f64> {
    check_pairs(gt, pred)?;
    Ok(gt.iter().zip(pred).map(|(g, p)| (p - g).abs()).sum::<f64>() / gt.len() as f64)
}

pub fn mse(gt: &[f64], pred: &[f64]) -> Result<f64> {
    check_pairs(gt, pred)?;
    Ok(gt
        .iter()
        .zip(pred)
        .map(|(g, p)| (p - g) * (p - g))
        .sum::<f64>()
        / gt.len() as f64)
}

pub fn rmse(gt: &[f64], pred: &[f64]) -> Result<f64> {
    Ok(mse(gt, pred)?.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image: String,
    pub gt_count: f64,
    pub pred_count: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub per_image: Vec<ImageResult>,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

impl EvalResult {
    pub fn from_counts(per_image: Vec<ImageResult>) -> Result<Self> {
        let gt: Vec<f64> = per_image.iter().map(|r| r.gt_count).collect();
        let pred: Vec<f64> = per_image.iter().map(|r| r.pred_count).collect();
        let mse = mse(&gt, &pred)?;
        Ok(EvalResult {
            mae: mae(&gt, &pred)?,
            mse,
            rmse: mse.sqrt(),
            per_image,
        })
    }
}

pub fn evaluate(model: &PyramidModel, samples: &[Sample]) -> Result<EvalResult> {
    evaluate_scaled(model, samples, DENSITY_SCALE)
}

pub fn evaluate_scaled(
    model: &PyramidModel,
    samples: &[Sample],
    density_scale: f64,
) -> Result<EvalResult> {
    let rows = samples
        .iter()
        .map(|s| {
            Ok(ImageResult {
                image: s.name.clone(),
                gt_count: s.count,
                pred_count: predict_detailed(model, &s.image, density_scale)?.count(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalResult::from_counts(rows)
}

/// Median single-image throughput of [`predict_full`] at `h × w`, after one
/// untimed warm-up run.
pub fn benchmark_fps(model: &PyramidModel, h: usize, w: usize, n_runs: usize) -> Result<f64> {
    if n_runs == 0 {
        return Err(Error::input("benchmark needs at least one run"));
    }
    if h == 0 || w == 0 {
        return Err(Error::input("benchmark dims must be non-zero"));
    }
    let data = (0..h * w)
        .map(|i| ((i * 37 + i / w * 11) % 251) as u8)
        .collect();
    let image = GrayImage::new(w, h, data)?;
    predict_full(model, &image)?;
    let mut secs = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let t = Instant::now();
        std::hint::black_box(predict_full(model, &image)?);
        secs.push(t.elapsed().as_secs_f64());
    }
    secs.sort_by(f64::total_cmp);
    let mid = secs.len() / 2;
    let median = if secs.len() % 2 == 1 {
        secs[mid]
    } else {
        0.5 * (secs[mid - 1] + secs[mid])
    };
    Ok(1.0 / median.max(1e-9))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub fps: Option<f64>,
}

/// `image,gt,pred,abs_err` rows, one per image.
pub fn report_csv(result: &EvalResult) -> String {
    let mut out = String::from("image,gt,pred,abs_err\n");
    for r in &result.per_image {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.image,
            r.gt_count,
            r.pred_count,
            (r.pred_count - r.gt_count).abs()
        );
    }
    out
}

pub fn write_report(
    result: &EvalResult,
    fps: Option<f64>,
    csv_path: &Path,
    json_path: &Path,
) -> Result<()> {
    fs::write(csv_path, report_csv(result))?;
    let summary = EvalSummary {
        mae: result.mae,
        mse: result.mse,
        rmse: result.rmse,
        fps,
    };
    fs::write(json_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::FusionMode;

    #[test]
    fn metric_arithmetic() {
        let (g, p) = ([3.0, 5.0], [4.0, 7.0]);
        assert_eq!(mae(&g, &p).unwrap(), 1.5);
        assert_eq!(mse(&g, &p).unwrap(), 2.5);
        assert_eq!(rmse(&g, &p).unwrap(), 2.5f64.sqrt());
        assert_eq!(mae(&[1.0], &[1.0]).unwrap(), 0.0);
        assert!((mae(&[2.0], &[-0.5]).unwrap() - rmse(&[2.0], &[-0.5]).unwrap()).abs() < 1e-15);
        assert!(matches!(mae(&[], &[]), Err(Error::Input(_))));
    }

    #[test]
    fn output_dims_are_quarter_resolution() {
        let model =
            PyramidModel::preset("FCN-5c-small", &[1.0, 0.7], FusionMode::Adaptive, 0).unwrap();
        let d = predict_full(&model, &GrayImage::filled(1024, 768, 0)).unwrap();
        assert_eq!((d.height, d.width), (192, 256));
        let d = predict_full(&model, &GrayImage::filled(13, 9, 50)).unwrap();
        assert_eq!((d.height, d.width), (3, 4));
    }

    #[test]
    fn zero_fusion_gives_zero_count() {
        let mut model =
            PyramidModel::preset("FCN-5c", &[1.0, 0.5], FusionMode::Adaptive, 2).unwrap();
        let fusion = model.fusion_id().unwrap();
        model.params_mut()[fusion].weights.data_mut().fill(0.0);
        let d = predict_full(&model, &GrayImage::filled(32, 24, 0)).unwrap();
        assert_eq!(d.total(), 0.0);
    }

    #[test]
    fn bench_rejects_zero_runs() {
        let model = PyramidModel::preset("FCN-5c", &[1.0], FusionMode::Single, 0).unwrap();
        assert!(matches!(
            benchmark_fps(&model, 16, 16, 0),
            Err(Error::Input(_))
        ));
        assert!(benchmark_fps(&model, 16, 16, 3).unwrap() > 0.0);
    }
}
