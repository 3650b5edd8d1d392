//! OCR engines behind one trait: an external Tesseract process and a
//! built-in template matcher for the bitmap font used by synthetic plots.

use std::io::Write;
use std::process::{Command, Stdio};

use super::{MmpuError, OcrToken};
use crate::font::{glyph_bbox, glyph_bit, glyph_rows};
use crate::prep::{binarize, BinarizedImage, RegionKind};
use crate::raster::{PixelRect, RasterImage};

/// A recognized word with its box relative to the recognized image.
#[derive(Debug, Clone, PartialEq)]
pub struct RawToken {
    pub text: String,
    pub confidence: f64,
    pub bbox: PixelRect,
}

pub trait OcrEngine: Send + Sync {
    fn name(&self) -> &str;
    /// Risk tables are read as a uniform text block, axis labels as sparse text.
    fn recognize(&self, image: &BinarizedImage, kind: RegionKind) -> Result<Vec<RawToken>, MmpuError>;
}

/// Binarizes `region` for `kind`, recognizes it and returns tokens in image
/// coordinates.
pub fn run_ocr(
    image: &RasterImage,
    region: PixelRect,
    kind: RegionKind,
    engine: &dyn OcrEngine,
) -> Result<Vec<OcrToken>, MmpuError> {
    if !region.fits_in(image.width(), image.height()) {
        return Err(MmpuError::RegionOutOfBounds {
            region,
            width: image.width(),
            height: image.height(),
        });
    }
    let sub = image.sub_image(region.x0, region.y0, region.x1, region.y1);
    let bin = binarize(&sub, kind);
    let raw = engine.recognize(&bin, kind)?;
    if raw.is_empty() {
        return Err(MmpuError::OcrEmpty { kind });
    }
    Ok(raw
        .into_iter()
        .map(|t| OcrToken {
            text: t.text,
            confidence: t.confidence.clamp(0.0, 1.0),
            bbox: PixelRect::new(
                t.bbox.x0 + region.x0,
                t.bbox.y0 + region.y0,
                t.bbox.x1 + region.x0,
                t.bbox.y1 + region.y0,
            ),
            region_kind: kind,
        })
        .collect())
}

/// Runs the `tesseract` binary with the LSTM engine (`--oem 3`), block
/// segmentation (`--psm 6`) for tables and sparse text (`--psm 11`) for labels.
#[derive(Debug, Clone)]
pub struct TesseractEngine {
    pub binary: String,
}

impl Default for TesseractEngine {
    fn default() -> Self {
        Self {
            binary: "tesseract".into(),
        }
    }
}

impl TesseractEngine {
    pub fn is_available(&self) -> bool {
        Command::new(&self.binary)
            .arg("--version")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .is_ok_and(|s| s.success())
    }
}

fn parse_tsv(tsv: &str) -> Vec<RawToken> {
    tsv.lines()
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() < 12 || f[0] != "5" {
                return None;
            }
            let text = f[11].trim();
            if text.is_empty() {
                return None;
            }
            let n = |i: usize| f[i].parse::<usize>().ok();
            let (left, top, w, h) = (n(6)?, n(7)?, n(8)?, n(9)?);
            let conf = f[10].parse::<f64>().ok()?;
            Some(RawToken {
                text: text.to_string(),
                confidence: (conf / 100.0).clamp(0.0, 1.0),
                bbox: PixelRect::new(left, top, left + w, top + h),
            })
        })
        .collect()
}

impl OcrEngine for TesseractEngine {
    fn name(&self) -> &str {
        "tesseract"
    }

    fn recognize(&self, image: &BinarizedImage, kind: RegionKind) -> Result<Vec<RawToken>, MmpuError> {
        let psm = match kind {
            RegionKind::RiskTable => "6",
            RegionKind::AxisLabels => "11",
        };
        let png = image.to_raster().encode_png()?;
        let mut child = Command::new(&self.binary)
            .args(["stdin", "stdout", "--oem", "3", "--psm", psm, "tsv"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| MmpuError::OcrUnavailable(format!("{}: {e}", self.binary)))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(&png)
            .map_err(|e| MmpuError::OcrFailed(e.to_string()))?;
        let out = child.wait_with_output().map_err(|e| MmpuError::OcrFailed(e.to_string()))?;
        if !out.status.success() {
            return Err(MmpuError::OcrFailed(String::from_utf8_lossy(&out.stderr).into_owned()));
        }
        Ok(parse_tsv(&String::from_utf8_lossy(&out.stdout)))
    }
}

struct Template {
    ch: char,
    c0: usize,
    r0: usize,
    c1: usize,
    r1: usize,
    rows: [u8; 8],
}

const NUMERIC: &str = "0123456789.,-%";
/// Word break when the ink gap exceeds this many font units.
const WORD_GAP: f64 = 5.5;
const MIN_CHAR_SCORE: f64 = 0.45;

/// Template matcher for the 8x8 bitmap font at any integer-ish scale.
pub struct GlyphOcrEngine {
    templates: Vec<Template>,
}

impl Default for GlyphOcrEngine {
    fn default() -> Self {
        let templates = ('!'..='~')
            .filter_map(|ch| {
                glyph_bbox(ch).map(|(c0, r0, c1, r1)| Template {
                    ch,
                    c0,
                    r0,
                    c1,
                    r1,
                    rows: glyph_rows(ch),
                })
            })
            .collect();
        Self { templates }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Blob {
    fn merge(&mut self, o: &Blob) {
        self.x0 = self.x0.min(o.x0);
        self.y0 = self.y0.min(o.y0);
        self.x1 = self.x1.max(o.x1);
        self.y1 = self.y1.max(o.y1);
    }
}

/// 8-connected components with at least two pixels; boxes are inclusive.
fn components(bin: &BinarizedImage) -> Vec<Blob> {
    let (w, h) = (bin.width, bin.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bin.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut b = Blob {
            x0: usize::MAX,
            y0: usize::MAX,
            x1: 0,
            y1: 0,
        };
        let mut n = 0;
        while let Some(i) = stack.pop() {
            n += 1;
            let (x, y) = (i % w, i / w);
            b.merge(&Blob { x0: x, y0: y, x1: x, y1: y });
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bin.bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if n >= 2 {
            out.push(b);
        }
    }
    out
}

struct Integral {
    w: usize,
    sum: Vec<u32>,
}

impl Integral {
    fn new(bin: &BinarizedImage) -> Self {
        let w = bin.width + 1;
        let mut sum = vec![0u32; w * (bin.height + 1)];
        for y in 0..bin.height {
            let mut row = 0;
            for x in 0..bin.width {
                row += bin.get(x, y) as u32;
                sum[(y + 1) * w + x + 1] = sum[y * w + x + 1] + row;
            }
        }
        Self { w, sum }
    }

    /// Ink fraction of the real-valued box `[x0, x1) x [y0, y1)`, snapped to
    /// whole pixels with at least one pixel per side.
    fn fraction(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
        let xa = x0.round() as usize;
        let ya = y0.round() as usize;
        let xb = (x1.round() as usize).max(xa + 1);
        let yb = (y1.round() as usize).max(ya + 1);
        let s = |x: usize, y: usize| self.sum[y * self.w + x] as f64;
        let ink = s(xb, yb) - s(xa, yb) - s(xb, ya) + s(xa, ya);
        ink / ((xb - xa) * (yb - ya)) as f64
    }
}

impl GlyphOcrEngine {
    fn score(&self, t: &Template, cell: &Blob, top: f64, scale: f64, integral: &Integral) -> f64 {
        let (tw, th) = ((t.c1 - t.c0 + 1) as f64, (t.r1 - t.r0 + 1) as f64);
        let bw = (cell.x1 - cell.x0 + 1) as f64;
        let bh = (cell.y1 - cell.y0 + 1) as f64;
        let size = (bw / scale - tw).abs() + (bh / scale - th).abs();
        let pos = ((cell.y0 as f64 - top) / scale - t.r0 as f64).abs();
        let (ux, uy) = (bw / tw, bh / th);
        let mut agree = 0.0;
        for j in 0..(t.r1 - t.r0 + 1) {
            for i in 0..(t.c1 - t.c0 + 1) {
                let x0 = cell.x0 as f64 + i as f64 * ux;
                let y0 = cell.y0 as f64 + j as f64 * uy;
                let frac = integral.fraction(x0, y0, x0 + ux, y0 + uy);
                let bit = glyph_bit(&t.rows, t.c0 + i, t.r0 + j) as u8 as f64;
                agree += 1.0 - (frac - bit).abs();
            }
        }
        agree / (tw * th) - 0.08 * size - 0.08 * pos
    }

    fn best(&self, cell: &Blob, top: f64, scale: f64, integral: &Integral, numeric: bool) -> (char, f64) {
        self.templates
            .iter()
            .filter(|t| !numeric || NUMERIC.contains(t.ch))
            .map(|t| (t.ch, self.score(t, cell, top, scale, integral)))
            .fold(('?', f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    fn read_line(&self, cells: &[Blob], top: f64, scale: f64, integral: &Integral) -> (Vec<RawToken>, f64) {
        let mut words: Vec<Vec<Blob>> = Vec::new();
        for c in cells {
            match words.last_mut() {
                Some(w) if (c.x0 as f64 - w.last().expect("non-empty word").x1 as f64 - 1.0) <= WORD_GAP * scale => {
                    w.push(*c)
                }
                _ => words.push(vec![*c]),
            }
        }
        let mut total = 0.0;
        let mut tokens = Vec::new();
        for word in words {
            let mut chars: Vec<(char, f64)> =
                word.iter().map(|c| self.best(c, top, scale, integral, false)).collect();
            let numeric_share = chars.iter().filter(|c| NUMERIC.contains(c.0)).count() * 2;
            if numeric_share >= chars.len() {
                chars = word.iter().map(|c| self.best(c, top, scale, integral, true)).collect();
            }
            total += chars.iter().map(|c| c.1).sum::<f64>();
            let kept: Vec<(char, f64, &Blob)> = chars
                .iter()
                .zip(&word)
                .filter(|(c, _)| c.1 >= MIN_CHAR_SCORE)
                .map(|(c, b)| (c.0, c.1, b))
                .collect();
            if kept.is_empty() {
                continue;
            }
            let mut bbox = *kept[0].2;
            for k in &kept[1..] {
                bbox.merge(k.2);
            }
            tokens.push(RawToken {
                text: kept.iter().map(|k| k.0).collect(),
                confidence: kept.iter().map(|k| k.1).fold(1.0, f64::min).clamp(0.0, 1.0),
                bbox: PixelRect::new(bbox.x0, bbox.y0, bbox.x1 + 1, bbox.y1 + 1),
            });
        }
        (tokens, total)
    }
}

impl OcrEngine for GlyphOcrEngine {
    fn name(&self) -> &str {
        "glyph"
    }

    fn recognize(&self, image: &BinarizedImage, _kind: RegionKind) -> Result<Vec<RawToken>, MmpuError> {
        let mut blobs = components(image);
        blobs.sort_by_key(|b| (b.y0 + b.y1, b.x0));
        let mut lines: Vec<(Blob, Vec<Blob>)> = Vec::new();
        for b in blobs {
            match lines.iter_mut().find(|(ext, _)| b.y0 <= ext.y1 && b.y1 >= ext.y0) {
                Some((ext, members)) => {
                    ext.merge(&b);
                    members.push(b);
                }
                None => lines.push((b, vec![b])),
            }
        }
        lines.sort_by_key(|(ext, _)| ext.y0);
        let integral = Integral::new(image);
        let mut out = Vec::new();
        for (ext, mut members) in lines {
            members.sort_by_key(|b| b.x0);
            let mut cells: Vec<Blob> = Vec::new();
            for b in members {
                match cells.last_mut() {
                    Some(c) if b.x0 <= c.x1 => c.merge(&b),
                    _ => cells.push(b),
                }
            }
            let height = (ext.y1 - ext.y0 + 1) as f64;
            let top = ext.y0 as f64;
            // seven rows without descenders, eight with
            let (tokens, _) = [7.0, 8.0]
                .iter()
                .map(|rows| self.read_line(&cells, top, height / rows, &integral))
                .fold((Vec::new(), f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            out.extend(tokens);
        }
        Ok(out)
    }
}
