//! Annotation JSON and density-map CSV/PGM files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DensityMap, PointAnnotations};
use crate::error::{Error, Result};
use crate::image::{write_pgm, GrayImage};

/// `{"image": name, "points": [[x, y], ...]}`. `height`/`width` are optional;
/// when absent the dims come from the image file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub image: String,
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
}

impl AnnotationFile {
    pub fn to_points(&self, height: usize, width: usize) -> Result<PointAnnotations> {
        PointAnnotations::new(
            self.points.iter().map(|p| (p[0], p[1])).collect(),
            height,
            width,
        )
    }
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<AnnotationFile> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_annotations(path: impl AsRef<Path>, ann: &AnnotationFile) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(ann)?)?;
    Ok(())
}

/// One CSV row per grid row, values in shortest round-trip decimal form.
pub fn write_density_csv(path: impl AsRef<Path>, d: &DensityMap) -> Result<()> {
    let mut s = String::with_capacity(d.data.len() * 8);
    for row in d.data.chunks(d.width) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_density_csv(path: impl AsRef<Path>, scale_factor: usize) -> Result<DensityMap> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (r, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::input(format!("density CSV row {r}: bad number '{f}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::input(format!(
                    "density CSV row {r} has {} columns, expected {w}",
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::input("empty density CSV"))?;
    Ok(DensityMap {
        height,
        width,
        scale_factor,
        data,
    })
}

/// 8-bit visualisation scaled so the maximum maps to 255.
pub fn write_density_pgm(path: impl AsRef<Path>, d: &DensityMap) -> Result<()> {
    let max = d.max();
    let k = if max > 0.0 { 255.0 / max } else { 0.0 };
    let img = GrayImage {
        width: d.width,
        height: d.height,
        data: d
            .data
            .iter()
            .map(|&v| (v.max(0.0) * k).round().min(255.0) as u8)
            .collect(),
    };
    write_pgm(path, &img)
}
