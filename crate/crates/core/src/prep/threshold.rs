//! Binarization. Foreground (ink) bits are set where the lightness is at or
//! below the threshold.

use serde::{Deserialize, Serialize};

use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    RiskTable,
    AxisLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinarizeMode {
    AdaptiveGaussian,
    GlobalFixed,
}

pub const GLOBAL_THRESHOLD: u8 = 128;
pub const ADAPTIVE_WINDOW: usize = 31;
pub const ADAPTIVE_OFFSET: f32 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarizedImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub mode: BinarizeMode,
}

impl BinarizedImage {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Black ink on white, for inspection and OCR engines that read images.
    pub fn to_raster(&self) -> RasterImage {
        let px = self
            .bits
            .iter()
            .map(|&b| if b { [0; 3] } else { [255; 3] })
            .collect();
        RasterImage::new(self.width, self.height, px).expect("non-empty")
    }
}

pub fn binarize(image: &RasterImage, kind: RegionKind) -> BinarizedImage {
    match kind {
        RegionKind::AxisLabels => binarize_global(image, GLOBAL_THRESHOLD),
        RegionKind::RiskTable => binarize_adaptive(image, ADAPTIVE_WINDOW, ADAPTIVE_OFFSET),
    }
}

pub fn binarize_global(image: &RasterImage, threshold: u8) -> BinarizedImage {
    BinarizedImage {
        width: image.width(),
        height: image.height(),
        bits: image.lightness_u8().into_iter().map(|l| l <= threshold).collect(),
        mode: BinarizeMode::GlobalFixed,
    }
}

/// Gaussian kernel with the sigma OpenCV derives from the window size.
fn gaussian_kernel(window: usize) -> Vec<f32> {
    let sigma = 0.3 * ((window as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let half = (window / 2) as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / total) as f32).collect()
}

/// Each pixel is foreground when its lightness is at most the
/// Gaussian-weighted local mean minus `offset` (borders replicated).
pub fn binarize_adaptive(image: &RasterImage, window: usize, offset: f32) -> BinarizedImage {
    let (w, h) = (image.width(), image.height());
    let l: Vec<f32> = image.lightness_u8().into_iter().map(f32::from).collect();
    let k = gaussian_kernel(window);
    let half = (window / 2) as isize;
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0f32;
            for (j, kv) in k.iter().enumerate() {
                s += kv * l[y * w + clampi(x as isize + j as isize - half, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut bits = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0f32;
            for (j, kv) in k.iter().enumerate() {
                s += kv * tmp[clampi(y as isize + j as isize - half, h) * w + x];
            }
            bits[y * w + x] = l[y * w + x] <= s - offset;
        }
    }
    BinarizedImage {
        width: w,
        height: h,
        bits,
        mode: BinarizeMode::AdaptiveGaussian,
    }
}
