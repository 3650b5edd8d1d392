//! Interior pixel features in HSL space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::CurveError;
use crate::geometry::AxisGeometry;
use crate::raster::{rgb_to_hsl, RasterImage, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelFeature {
    pub u: usize,
    pub v: usize,
    pub h: f64,
    pub s: f64,
    pub l: f64,
    pub rgb: Rgb,
}

impl PixelFeature {
    pub fn from_rgb(u: usize, v: usize, rgb: Rgb) -> Self {
        let (h, s, l) = rgb_to_hsl(rgb);
        Self { u, v, h, s, l, rgb }
    }
}

/// Inclusive pixel bounds of the searchable plot interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorRegion {
    pub u0: usize,
    pub u1: usize,
    pub v0: usize,
    pub v1: usize,
}

pub const MIN_LIGHTNESS: f64 = 0.2;
/// Pixels this close to a baseline (beyond the stroke margin) are dropped.
pub const AXIS_EXCLUSION: f64 = 2.0;
/// Extra rows above the y-axis top and columns right of the x-axis end.
pub const OUTER_PAD: f64 = 16.0;
/// Quantized colors holding at least this share of interior pixels are
/// background.
pub const BACKGROUND_SHARE: f64 = 0.05;

pub fn interior_region(geom: &AxisGeometry, width: usize, height: usize) -> Option<InteriorRegion> {
    let u0 = (geom.u_x0 + geom.margins.left + AXIS_EXCLUSION).ceil().max(0.0) as usize;
    let u1 = ((geom.u_x1 + OUTER_PAD).floor() as usize).min(width.saturating_sub(1));
    let v0 = (geom.v_y0 - OUTER_PAD).ceil().max(0.0) as usize;
    let v1_f = (geom.v_y1 - geom.margins.bottom - AXIS_EXCLUSION).floor();
    if v1_f < 0.0 {
        return None;
    }
    let v1 = (v1_f as usize).min(height.saturating_sub(1));
    (u0 <= u1 && v0 <= v1).then_some(InteriorRegion { u0, u1, v0, v1 })
}

fn quantize(p: Rgb) -> u16 {
    ((p[0] as u16 >> 3) << 10) | ((p[1] as u16 >> 3) << 5) | (p[2] as u16 >> 3)
}

/// Non-background interior pixels with lightness at least 0.2, in row-major
/// order.
pub fn extract_features(image: &RasterImage, geom: &AxisGeometry) -> Result<Vec<PixelFeature>, CurveError> {
    let region = interior_region(geom, image.width(), image.height()).ok_or(CurveError::NoCurvePixels)?;
    let mut hist: HashMap<u16, usize> = HashMap::new();
    let mut total = 0usize;
    for v in region.v0..=region.v1 {
        for u in region.u0..=region.u1 {
            *hist.entry(quantize(image.get(u, v))).or_default() += 1;
            total += 1;
        }
    }
    let cutoff = BACKGROUND_SHARE * total as f64;
    let mut out = Vec::new();
    for v in region.v0..=region.v1 {
        for u in region.u0..=region.u1 {
            let p = image.get(u, v);
            if hist[&quantize(p)] as f64 >= cutoff {
                continue;
            }
            let f = PixelFeature::from_rgb(u, v, p);
            if f.l >= MIN_LIGHTNESS {
                out.push(f);
            }
        }
    }
    if out.is_empty() {
        return Err(CurveError::NoCurvePixels);
    }
    Ok(out)
}
