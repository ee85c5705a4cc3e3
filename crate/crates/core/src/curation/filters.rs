//! Per-image quality measurements and crop geometry.

use image::{GrayImage, RgbImage};

use crate::{Error, Result};

/// Mean absolute channel differences averaged over the three channel pairs,
/// in 8-bit units. Zero for any grayscale image.
pub fn color_delta(img: &RgbImage) -> Result<f64> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage);
    }
    let (mut bg, mut gr, mut rb) = (0u64, 0u64, 0u64);
    for p in img.pixels() {
        let [r, g, b] = p.0.map(i32::from);
        bg += (b - g).unsigned_abs() as u64;
        gr += (g - r).unsigned_abs() as u64;
        rb += (r - b).unsigned_abs() as u64;
    }
    let n = (img.width() as u64 * img.height() as u64) as f64;
    Ok((bg as f64 / n + gr as f64 / n + rb as f64 / n) / 3.0)
}

/// BT.601 luma rounded to 8 bits.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let [r, g, b] = img.get_pixel(x, y).0.map(f64::from);
        image::Luma([(0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8])
    })
}

/// Population variance of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_variance(gray: &GrayImage) -> Result<f64> {
    let (w, h) = gray.dimensions();
    if w < 3 || h < 3 {
        return Err(Error::TooSmall {
            width: w,
            height: h,
        });
    }
    let at = |x: u32, y: u32| f64::from(gray.get_pixel(x, y).0[0]);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let l = at(x, y - 1) + at(x, y + 1) + at(x - 1, y) + at(x + 1, y) - 4.0 * at(x, y);
            sum += l;
            sum_sq += l * l;
        }
    }
    let n = f64::from((w - 2) * (h - 2));
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

const HSV_SHIFT: u32 = 12;

/// RGB to 8-bit HSV with hue in half-degrees (`[0, 179]`), using the same
/// fixed-point reciprocal tables as OpenCV so results match bit for bit.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> [u8; 3] {
    let [r, g, b] = rgb.map(i32::from);
    let v = r.max(g).max(b);
    let diff = v - r.min(g).min(b);
    let half = 1 << (HSV_SHIFT - 1);
    let recip = |num: f64, den: f64| if den == 0.0 { 0 } else { (num / den).round() as i32 };
    let s = (diff * recip(f64::from(255 << HSV_SHIFT), f64::from(v)) + half) >> HSV_SHIFT;
    let h = if v == r {
        g - b
    } else if v == g {
        b - r + 2 * diff
    } else {
        r - g + 4 * diff
    };
    let mut h = (h * recip(f64::from(180 << HSV_SHIFT), 6.0 * f64::from(diff)) + half) >> HSV_SHIFT;
    if h < 0 {
        h += 180;
    }
    [h as u8, s as u8, v as u8]
}

/// Inverse of [`rgb_to_hsv`] up to rounding.
pub fn hsv_to_rgb(hsv: [u8; 3]) -> [u8; 3] {
    let h = f64::from(hsv[0]) * 2.0;
    let s = f64::from(hsv[1]) / 255.0;
    let v = f64::from(hsv[2]);
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| (ch + m).round().clamp(0.0, 255.0) as u8)
}

pub fn is_skin(hsv: [u8; 3]) -> bool {
    hsv[0] <= 25 && hsv[1] >= 40 && hsv[2] >= 60
}

/// Fraction of pixels inside the skin-tone HSV box.
pub fn skin_ratio(img: &RgbImage) -> Result<f64> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::EmptyImage);
    }
    let skin = img.pixels().filter(|p| is_skin(rgb_to_hsv(p.0))).count();
    Ok(skin as f64 / (img.width() as f64 * img.height() as f64))
}

/// Axis-aligned box in pixels: origin plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FaceBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl FaceBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    /// Intersection with a `width` x `height` image; `None` if empty.
    pub fn clip(&self, width: u32, height: u32) -> Option<FaceBox> {
        let x1 = self.x.saturating_add(self.w).min(width);
        let y1 = self.y.saturating_add(self.h).min(height);
        (self.x < x1 && self.y < y1).then(|| FaceBox::new(self.x, self.y, x1 - self.x, y1 - self.y))
    }
}

/// Grows the box by `round(pad_fraction * max(w, h))` on every side (halves
/// round up) and clips to the image. Returns corners `(x0, y0, x1, y1)`.
pub fn padded_crop_box(face: FaceBox, image_size: (u32, u32), pad_fraction: f64) -> Result<(u32, u32, u32, u32)> {
    let (width, height) = image_size;
    if face.w == 0 || face.h == 0 {
        return Err(Error::InvalidBox(format!("empty box {face:?}")));
    }
    if u64::from(face.x) + u64::from(face.w) > u64::from(width) || u64::from(face.y) + u64::from(face.h) > u64::from(height) {
        return Err(Error::InvalidBox(format!("{face:?} outside {width}x{height} image")));
    }
    if !(0.0..=1.0).contains(&pad_fraction) {
        return Err(Error::InvalidBox(format!("pad fraction {pad_fraction} outside [0, 1]")));
    }
    let pad = (pad_fraction * f64::from(face.w.max(face.h)) + 0.5).floor() as i64;
    let clip = |v: i64, hi: u32| v.clamp(0, i64::from(hi)) as u32;
    Ok((
        clip(i64::from(face.x) - pad, width),
        clip(i64::from(face.y) - pad, height),
        clip(i64::from(face.x) + i64::from(face.w) + pad, width),
        clip(i64::from(face.y) + i64::from(face.h) + pad, height),
    ))
}
