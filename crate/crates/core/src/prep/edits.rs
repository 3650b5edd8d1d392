//! User edits: crop rectangles and eraser strokes, expressed in source-image
//! pixel coordinates.

use serde::{Deserialize, Serialize};

use super::PrepError;
use crate::raster::{RasterImage, Rgb};

/// One user edit. Crop corners are half-open: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionMask {
    Crop {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    },
    Erase {
        points: Vec<[f64; 2]>,
        radius: f64,
    },
}

/// The `05_edits.json` document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditList {
    pub edits: Vec<RegionMask>,
}

impl EditList {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("edit list serializes")
    }
}

/// Crops `[x0, x1) x [y0, y1)` relative to `image`.
pub fn crop(image: &RasterImage, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<RasterImage, PrepError> {
    if x0 >= x1 || y0 >= y1 || x1 > image.width() || y1 > image.height() {
        return Err(PrepError::MaskOutOfBounds {
            index: 0,
            reason: format!(
                "crop ({x0},{y0})-({x1},{y1}) outside {}x{}",
                image.width(),
                image.height()
            ),
        });
    }
    Ok(image.sub_image(x0, y0, x1, y1))
}

/// Per-channel median of the one-pixel border ring.
pub fn border_median(image: &RasterImage) -> Rgb {
    let (w, h) = (image.width(), image.height());
    let mut ring = Vec::with_capacity(2 * (w + h));
    for x in 0..w {
        ring.push(image.get(x, 0));
        if h > 1 {
            ring.push(image.get(x, h - 1));
        }
    }
    for y in 1..h.saturating_sub(1) {
        ring.push(image.get(0, y));
        if w > 1 {
            ring.push(image.get(w - 1, y));
        }
    }
    let mut out = [0u8; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut vals: Vec<u8> = ring.iter().map(|p| p[c]).collect();
        vals.sort_unstable();
        *slot = vals[vals.len() / 2];
    }
    out
}

fn dist_to_segment(px: f64, py: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a[0]) * dx + (py - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Paints every pixel whose center lies within `radius` of the polyline.
fn erase_stroke(image: &mut RasterImage, points: &[[f64; 2]], radius: f64, color: Rgb) {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let segments: Vec<([f64; 2], [f64; 2])> = if points.len() == 1 {
        vec![(points[0], points[0])]
    } else {
        points.windows(2).map(|p| (p[0], p[1])).collect()
    };
    for (a, b) in segments {
        let x0 = (a[0].min(b[0]) - radius).floor().max(0.0) as usize;
        let x1 = (a[0].max(b[0]) + radius).ceil().min(w - 1.0).max(0.0) as usize;
        let y0 = (a[1].min(b[1]) - radius).floor().max(0.0) as usize;
        let y1 = (a[1].max(b[1]) + radius).ceil().min(h - 1.0).max(0.0) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if dist_to_segment(x as f64, y as f64, a, b) <= radius {
                    image.set(x, y, color);
                }
            }
        }
    }
}

/// Applies edits in order. All coordinates refer to the original source
/// image; each crop must lie inside the view left by earlier crops, and
/// erase points must lie inside the current view.
pub fn apply_edits(image: &RasterImage, masks: &[RegionMask]) -> Result<RasterImage, PrepError> {
    let mut current = image.clone();
    // source-coordinate origin of `current`
    let (mut ox, mut oy) = (0usize, 0usize);
    for (index, mask) in masks.iter().enumerate() {
        let (vw, vh) = (current.width(), current.height());
        match mask {
            RegionMask::Crop { x0, y0, x1, y1 } => {
                let inside = *x0 >= ox && *y0 >= oy && x1 > x0 && y1 > y0 && *x1 <= ox + vw && *y1 <= oy + vh;
                if !inside {
                    return Err(PrepError::MaskOutOfBounds {
                        index,
                        reason: format!(
                            "crop ({x0},{y0})-({x1},{y1}) outside view ({ox},{oy})-({},{})",
                            ox + vw,
                            oy + vh
                        ),
                    });
                }
                current = current.sub_image(x0 - ox, y0 - oy, x1 - ox, y1 - oy);
                ox = *x0;
                oy = *y0;
            }
            RegionMask::Erase { points, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(PrepError::MaskOutOfBounds {
                        index,
                        reason: format!("erase radius must be positive (got {radius})"),
                    });
                }
                if points.is_empty() {
                    return Err(PrepError::MaskOutOfBounds {
                        index,
                        reason: "erase stroke has no points".into(),
                    });
                }
                let local: Vec<[f64; 2]> = points
                    .iter()
                    .map(|p| [p[0] - ox as f64, p[1] - oy as f64])
                    .collect();
                if let Some(p) = local
                    .iter()
                    .find(|p| !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] < vw as f64 && p[1] < vh as f64))
                {
                    return Err(PrepError::MaskOutOfBounds {
                        index,
                        reason: format!(
                            "erase point ({}, {}) outside view",
                            p[0] + ox as f64,
                            p[1] + oy as f64
                        ),
                    });
                }
                let bg = border_median(&current);
                erase_stroke(&mut current, &local, *radius, bg);
            }
        }
    }
    Ok(current)
}
