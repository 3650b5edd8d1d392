//! 8x8 bitmap glyphs used both to draw synthetic plots and as templates for
//! the built-in glyph OCR engine.

use font8x8::legacy::BASIC_LEGACY;

use crate::raster::{RasterImage, Rgb};

pub const CELL: usize = 8;

/// Row bitmap for an ASCII character; bit `c` of row `r` is the pixel at
/// column `c`. Non-ASCII characters render as blanks.
pub fn glyph_rows(ch: char) -> [u8; 8] {
    let idx = ch as usize;
    if idx < 128 {
        BASIC_LEGACY[idx]
    } else {
        [0; 8]
    }
}

#[inline]
pub fn glyph_bit(rows: &[u8; 8], col: usize, row: usize) -> bool {
    (rows[row] >> col) & 1 == 1
}

/// Tight bounding box `(col0, row0, col1, row1)` (inclusive) of the set bits.
pub fn glyph_bbox(ch: char) -> Option<(usize, usize, usize, usize)> {
    let rows = glyph_rows(ch);
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for r in 0..CELL {
        for c in 0..CELL {
            if glyph_bit(&rows, c, r) {
                bbox = Some(match bbox {
                    None => (c, r, c, r),
                    Some((c0, r0, c1, r1)) => (c0.min(c), r0.min(r), c1.max(c), r1.max(r)),
                });
            }
        }
    }
    bbox
}

/// Width in pixels of `text` drawn at `scale`.
pub fn text_width(text: &str, scale: usize) -> usize {
    text.chars().count() * CELL * scale
}

/// Draws `text` with its top-left cell corner at `(x, y)`. Pixels outside the
/// image are clipped.
pub fn draw_text(img: &mut RasterImage, text: &str, x: i64, y: i64, scale: usize, color: Rgb) {
    for (i, ch) in text.chars().enumerate() {
        let rows = glyph_rows(ch);
        let ox = x + (i * CELL * scale) as i64;
        for r in 0..CELL {
            for c in 0..CELL {
                if !glyph_bit(&rows, c, r) {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let px = ox + (c * scale + dx) as i64;
                        let py = y + (r * scale + dy) as i64;
                        put(img, px, py, color);
                    }
                }
            }
        }
    }
}

/// Draws `text` rotated 90 degrees counter-clockwise, reading bottom to top,
/// with the rotated block's top-left corner at `(x, y)`.
pub fn draw_text_vertical(
    img: &mut RasterImage,
    text: &str,
    x: i64,
    y: i64,
    scale: usize,
    color: Rgb,
) {
    let n = text.chars().count();
    let total = (n * CELL * scale) as i64;
    for (i, ch) in text.chars().enumerate() {
        let rows = glyph_rows(ch);
        for r in 0..CELL {
            for c in 0..CELL {
                if !glyph_bit(&rows, c, r) {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        // unrotated coordinates within the text line
                        let ux = (i * CELL * scale + c * scale + dx) as i64;
                        let uy = (r * scale + dy) as i64;
                        put(img, x + uy, y + total - 1 - ux, color);
                    }
                }
            }
        }
    }
}

#[inline]
fn put(img: &mut RasterImage, x: i64, y: i64, color: Rgb) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set(x as usize, y as usize, color);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_have_glyphs() {
        for ch in "0123456789.".chars() {
            assert!(glyph_bbox(ch).is_some(), "missing glyph {ch}");
        }
        assert!(glyph_bbox(' ').is_none());
    }

    #[test]
    fn draw_text_sets_pixels_within_cell() {
        let mut img = RasterImage::filled(40, 20, [255; 3]);
        draw_text(&mut img, "1", 2, 2, 2, [0; 3]);
        let dark: Vec<(usize, usize)> = (0..20)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| img.get(x, y) == [0; 3])
            .collect();
        assert!(!dark.is_empty());
        assert!(dark.iter().all(|&(x, y)| (2..18).contains(&x) && (2..18).contains(&y)));
    }
}
