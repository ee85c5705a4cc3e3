//! Data-curation logic: Wikidata query construction and the image filter
//! chain (colour, texture, skin tone, face detection, padded crop).

pub mod filters;
pub mod sparql;

use std::fmt;
use std::io::Write;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
pub use filters::{color_delta, laplacian_variance, padded_crop_box, skin_ratio, to_gray, FaceBox};
pub use sparql::{build_sparql, parse_results, SparqlHit, SparqlRequest};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    pub color_delta_min: f64,
    pub laplacian_var_min: f64,
    pub skin_ratio_min: f64,
    pub face_confidence_min: f64,
    pub pad_fraction: f64,
    pub out_size: u32,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            color_delta_min: 5.0,
            laplacian_var_min: 100.0,
            skin_ratio_min: 0.15,
            face_confidence_min: 0.5,
            pad_fraction: 0.20,
            out_size: 512,
        }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.color_delta_min,
            self.laplacian_var_min,
            self.skin_ratio_min,
            self.face_confidence_min,
            self.pad_fraction,
        ];
        if all.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidConfig("filter thresholds must be finite and >= 0".into()));
        }
        if self.pad_fraction > 1.0 {
            return Err(Error::InvalidConfig(format!("pad_fraction {} > 1", self.pad_fraction)));
        }
        if self.out_size == 0 {
            return Err(Error::InvalidConfig("out_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Grayscale,
    LowTexture,
    LowSkin,
    NoFace,
    LowConfidence,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Grayscale => "grayscale",
            RejectReason::LowTexture => "low_texture",
            RejectReason::LowSkin => "low_skin",
            RejectReason::NoFace => "no_face",
            RejectReason::LowConfidence => "low_confidence",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of the filter chain. Stages after the first failure are not
/// measured and stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub passed: bool,
    pub color_delta: f64,
    pub laplacian_var: Option<f64>,
    pub skin_ratio: Option<f64>,
    pub face_box: Option<FaceBox>,
    pub reject_reason: Option<RejectReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: FaceBox,
    pub confidence: f64,
}

/// Anything that finds faces. Implementations must tolerate concurrent calls.
pub trait FaceDetector: Send + Sync {
    fn detect(&self, img: &RgbImage) -> Vec<Detection>;
}

/// Returns the same detections for every image.
#[derive(Debug, Clone, Default)]
pub struct StubDetector {
    pub detections: Vec<Detection>,
}

impl StubDetector {
    pub fn new(detections: Vec<Detection>) -> Self {
        Self { detections }
    }
}

impl FaceDetector for StubDetector {
    fn detect(&self, _img: &RgbImage) -> Vec<Detection> {
        self.detections.clone()
    }
}

/// Colour, texture and skin checks in that order, stopping at the first
/// failure, then the largest confident face. Detections are clipped to the
/// image before their area is compared.
pub fn run_filter_chain(img: &RgbImage, detector: &dyn FaceDetector, th: &FilterThresholds) -> Result<FilterVerdict> {
    let mut v = FilterVerdict {
        passed: false,
        color_delta: color_delta(img)?,
        laplacian_var: None,
        skin_ratio: None,
        face_box: None,
        reject_reason: None,
    };
    let reject = |mut v: FilterVerdict, r| {
        v.reject_reason = Some(r);
        Ok(v)
    };
    if v.color_delta < th.color_delta_min {
        return reject(v, RejectReason::Grayscale);
    }
    let lap = match laplacian_variance(&to_gray(img)) {
        Ok(l) => l,
        Err(Error::TooSmall { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    v.laplacian_var = Some(lap);
    if lap < th.laplacian_var_min {
        return reject(v, RejectReason::LowTexture);
    }
    let skin = skin_ratio(img)?;
    v.skin_ratio = Some(skin);
    if skin < th.skin_ratio_min {
        return reject(v, RejectReason::LowSkin);
    }
    let found: Vec<Detection> = detector
        .detect(img)
        .into_iter()
        .filter_map(|d| {
            d.bbox.clip(img.width(), img.height()).map(|bbox| Detection {
                bbox,
                confidence: d.confidence,
            })
        })
        .collect();
    if found.is_empty() {
        return reject(v, RejectReason::NoFace);
    }
    // First detection wins ties on area.
    let best = found
        .iter()
        .filter(|d| d.confidence >= th.face_confidence_min)
        .fold(None::<&Detection>, |best, d| match best {
            Some(b) if b.bbox.area() >= d.bbox.area() => Some(b),
            _ => Some(d),
        });
    match best {
        None => reject(v, RejectReason::LowConfidence),
        Some(d) => {
            v.face_box = Some(d.bbox);
            v.passed = true;
            Ok(v)
        }
    }
}

/// Padded face crop resized to `out_size` square with a Lanczos kernel.
pub fn crop_face(img: &RgbImage, face: FaceBox, th: &FilterThresholds) -> Result<RgbImage> {
    let (x0, y0, x1, y1) = padded_crop_box(face, img.dimensions(), th.pad_fraction)?;
    let crop = image::imageops::crop_imm(img, x0, y0, x1 - x0, y1 - y0).to_image();
    Ok(image::imageops::resize(&crop, th.out_size, th.out_size, FilterType::Lanczos3))
}

/// Writes verdicts as `path,passed,reason,color_delta,laplacian_var,skin_ratio,box`.
/// Unmeasured values are empty; the box is `x y w h`.
pub fn write_manifest<W: Write>(w: W, rows: &[(String, FilterVerdict)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "passed", "reason", "color_delta", "laplacian_var", "skin_ratio", "box"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for (path, v) in rows {
        out.write_record([
            path.clone(),
            v.passed.to_string(),
            v.reject_reason.map(|r| r.to_string()).unwrap_or_default(),
            format!("{:.6}", v.color_delta),
            opt(v.laplacian_var),
            opt(v.skin_ratio),
            v.face_box.map(|b| format!("{} {} {} {}", b.x, b.y, b.w, b.h)).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<manifest>", e))?;
    Ok(())
}

/// Loads an image file and runs the chain on it.
pub fn filter_file(path: &Path, detector: &dyn FaceDetector, th: &FilterThresholds) -> Result<(RgbImage, FilterVerdict)> {
    let img = image::open(path)?.to_rgb8();
    let v = run_filter_chain(&img, detector, th)?;
    Ok((img, v))
}
