//! Text regions around a located plot frame: x tick labels, y tick labels
//! and the block beneath (risk table).

use crate::geometry::{assign_tokens, AxisGeometry, TickToken, BACKGROUND_LIGHTNESS};
use crate::prep::RegionKind;
use crate::raster::{PixelRect, RasterImage};

use super::{run_ocr, MmpuError, OcrEngine, OcrToken};

/// Tick marks longer than this are not skipped.
const MAX_TICK: usize = 15;
/// Vertical padding of the y-label strip around the frame.
const Y_PAD: usize = 20;
/// A blank run this long ends a text band; thicker axes (upscaled images)
/// stretch it proportionally.
const BAND_GAP: usize = 10;
const GAP_PER_STROKE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextLayout {
    pub x_labels: Option<PixelRect>,
    pub y_labels: Option<PixelRect>,
    pub below: Option<PixelRect>,
}

struct Busy<'a> {
    light: Vec<u8>,
    image: &'a RasterImage,
}

impl Busy<'_> {
    fn at(&self, x: usize, y: usize) -> bool {
        self.light[y * self.image.width() + x] < BACKGROUND_LIGHTNESS
    }

    fn row_fraction(&self, y: usize, x0: usize, x1: usize) -> f64 {
        (x0..x1).filter(|&x| self.at(x, y)).count() as f64 / (x1 - x0).max(1) as f64
    }

    fn col_fraction(&self, x: usize, y0: usize, y1: usize) -> f64 {
        (y0..y1).filter(|&y| self.at(x, y)).count() as f64 / (y1 - y0).max(1) as f64
    }
}

/// Walks away from the frame: past the axis stroke, past short tick marks,
/// then spans the first band of ink. Returns the band as `[start, end)`.
fn band(n: usize, start: usize, is_stroke: impl Fn(usize) -> bool, is_busy: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
    let mut i = start;
    while i < n && is_stroke(i) {
        i += 1;
    }
    let gap = BAND_GAP.max(GAP_PER_STROKE * (i - start));
    // tick marks: a short busy run right after the stroke, then a gap
    let run = (i..n.min(i + MAX_TICK + 1)).take_while(|&k| is_busy(k)).count();
    if run > 0 && run <= MAX_TICK && i + run < n && !is_busy(i + run) {
        i += run;
    }
    let s = (i..n).find(|&k| is_busy(k))?;
    let mut e = s;
    let mut k = s;
    while k < n && k - e <= gap {
        if is_busy(k) {
            e = k + 1;
        }
        k += 1;
    }
    Some((s, e))
}

pub fn text_layout(image: &RasterImage, geom: &AxisGeometry) -> TextLayout {
    let (w, h) = (image.width(), image.height());
    let busy = Busy {
        light: image.lightness_u8(),
        image,
    };
    let (xa, xb) = (geom.u_x0.round().max(0.0) as usize, (geom.u_x1.round() as usize + 1).min(w));
    let (ya, yb) = (geom.v_y0.round().max(0.0) as usize, (geom.v_y1.round() as usize + 1).min(h));

    let x_band = band(
        h,
        geom.v_y1.round() as usize,
        |y| busy.row_fraction(y, xa, xb) > 0.5,
        |y| busy.row_fraction(y, 0, w) > 0.0,
    );
    let x_labels = x_band.map(|(s, e)| PixelRect::new(0, s.saturating_sub(2), w, (e + 2).min(h)));
    let below = x_labels.and_then(|r| (r.y1 + 8 <= h).then(|| PixelRect::new(0, r.y1, w, h)));

    let (ys0, ys1) = (ya.saturating_sub(Y_PAD), (yb + Y_PAD).min(h));
    let left = geom.u_x0.round() as usize;
    // scan leftwards by mirroring indices
    let y_band = band(
        left + 1,
        0,
        |i| busy.col_fraction(left - i, ya, yb) > 0.5,
        |i| busy.col_fraction(left - i, ya, yb) > 0.0,
    );
    let y_labels = y_band.map(|(s, e)| PixelRect::new((left + 1).saturating_sub(e + 2), ys0, left + 1 - s, ys1));

    TextLayout {
        x_labels,
        y_labels,
        below,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReading {
    /// Every recognized token, axis strips first.
    pub tokens: Vec<OcrToken>,
    pub x: Vec<TickToken>,
    pub y: Vec<TickToken>,
}

/// Keeps numeric tokens flush with the rightmost numeric label, dropping
/// axis titles and stray marks further left.
fn right_aligned(mut ys: Vec<TickToken>) -> Vec<TickToken> {
    ys.retain(|t| t.numeric_value.is_some());
    let Some(edge) = ys.iter().map(|t| t.bbox.x1).max() else {
        return ys;
    };
    let mut heights: Vec<usize> = ys.iter().map(|t| t.bbox.height()).collect();
    heights.sort_unstable();
    let slack = heights[heights.len() / 2];
    ys.retain(|t| t.bbox.x1 + slack >= edge);
    ys
}

/// OCR over the label strips and the block below the x labels. A missing
/// strip or one without text contributes no tokens.
pub fn read_ticks(image: &RasterImage, geom: &AxisGeometry, engine: &dyn OcrEngine) -> Result<TickReading, MmpuError> {
    let layout = text_layout(image, geom);
    let mut strips = Vec::new();
    for rect in [layout.x_labels, layout.y_labels] {
        let found = match rect.map(|r| run_ocr(image, r, RegionKind::AxisLabels, engine)) {
            Some(Ok(t)) => t,
            None | Some(Err(MmpuError::OcrEmpty { .. })) => Vec::new(),
            Some(Err(e)) => return Err(e),
        };
        strips.push(found);
    }
    let ticks = |v: &[OcrToken]| v.iter().map(OcrToken::to_tick).collect::<Vec<_>>();
    // each strip only feeds its own axis
    let x = assign_tokens(&ticks(&strips[0]), geom).0;
    let y = assign_tokens(&ticks(&strips[1]), geom).1;
    let axis_tokens: Vec<OcrToken> = strips.concat();
    let mut tokens = axis_tokens;
    if let Some(rect) = layout.below {
        match run_ocr(image, rect, RegionKind::RiskTable, engine) {
            Ok(t) => tokens.extend(t),
            Err(MmpuError::OcrEmpty { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(TickReading {
        tokens,
        x,
        y: right_aligned(y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::font::draw_text;
    use crate::geometry::{detect_ranges, locate_axes, Axis};
    use crate::mmpu::GlyphOcrEngine;

    fn frame() -> RasterImage {
        let mut img = RasterImage::filled(400, 330, [255; 3]);
        for x in 59..=361 {
            for y in 249..=251 {
                img.set(x, y, [0; 3]);
            }
        }
        for y in 19..=251 {
            for x in 59..=61 {
                img.set(x, y, [0; 3]);
            }
        }
        for (k, label) in ["0", "10", "20", "30"].iter().enumerate() {
            let u = 60 + k * 100;
            for y in 252..258 {
                for x in u - 1..=u + 1 {
                    img.set(x, y, [0; 3]);
                }
            }
            draw_text(&mut img, label, u as i64 - 8 * label.len() as i64, 262, 2, [0; 3]);
        }
        for (k, label) in ["0.0", "0.5", "1.0"].iter().enumerate() {
            let v = 250 - k * 115;
            draw_text(&mut img, label, 2, v as i64 - 8, 2, [0; 3]);
        }
        draw_text(&mut img, "12 8 3 1", 60, 300, 2, [0; 3]);
        img
    }

    #[test]
    fn layout_skips_ticks_and_frames_labels() {
        let img = frame();
        let geom = locate_axes(&img).unwrap();
        let layout = text_layout(&img, &geom);
        let xl = layout.x_labels.unwrap();
        assert_eq!((xl.y0, xl.y1), (260, 278));
        assert_eq!(layout.below.unwrap().y0, 278);
        assert!(layout.y_labels.unwrap().x1 <= 60);
    }

    #[test]
    fn ticks_read_back() {
        let img = frame();
        let geom = locate_axes(&img).unwrap();
        let r = read_ticks(&img, &geom, &GlyphOcrEngine::default()).unwrap();
        let x = detect_ranges(&r.x, Axis::X).unwrap();
        assert_eq!((x.min, x.max, x.increment), (0.0, 30.0, 10.0));
        let y = detect_ranges(&r.y, Axis::Y).unwrap();
        assert_eq!((y.min, y.max, y.increment), (0.0, 1.0, 0.5));
        assert!(r.tokens.iter().any(|t| t.region_kind == RegionKind::RiskTable && t.text == "12"));
    }

    #[test]
    fn titles_left_of_labels_dropped() {
        let t = |text: &str, x0, x1| TickToken::new(text, PixelRect::new(x0, 0, x1, 16));
        let kept = right_aligned(vec![t("0.5", 40, 88), t("1.0", 40, 88), t("7", 2, 10), t("S", 20, 30)]);
        assert_eq!(kept.len(), 2);
    }
}
