//! Row-major 8-bit RGB rasters and the color conversions shared by the
//! preparation, geometry and curve stages.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image dimensions must be at least 1x1 (got {width}x{height})")]
    Empty { width: usize, height: usize },
    #[error("pixel buffer has {got} pixels, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Rgb = [u8; 3];

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0 - 0.5,
            (self.y0 + self.y1) as f64 / 2.0 - 0.5,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 as f64 - 0.5
            && x <= self.x1 as f64 - 0.5
            && y >= self.y0 as f64 - 0.5
            && y <= self.y1 as f64 - 0.5
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

/// An RGB image with `width * height` pixels stored row by row.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Empty { width, height });
        }
        if pixels.len() != width * height {
            return Err(RasterError::BufferSize {
                got: pixels.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A constant-color image. Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    /// Copies the half-open rectangle `[x0, x1) x [y0, y1)`.
    pub fn sub_image(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        assert!(x0 < x1 && x1 <= self.width && y0 < y1 && y1 <= self.height);
        let mut pixels = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x1]);
        }
        Self {
            width: x1 - x0,
            height: y1 - y0,
            pixels,
        }
    }

    /// HSL lightness of every pixel in `[0, 255]`.
    pub fn lightness_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| lightness_u8(p)).collect()
    }

    pub fn from_rgb_image(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self {
            width: w as usize,
            height: h as usize,
            pixels,
        }
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        let mut buf = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            buf.extend_from_slice(p);
        }
        RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer size matches dimensions")
    }

    /// Decodes PNG or JPEG bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory(bytes)?;
        Ok(Self::from_rgb_image(&img.to_rgb8()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// HSL lightness `(max + min) / 2` on the 0..=255 scale, rounded.
#[inline]
pub fn lightness_u8(p: Rgb) -> u8 {
    let max = p[0].max(p[1]).max(p[2]) as u16;
    let min = p[0].min(p[1]).min(p[2]) as u16;
    ((max + min + 1) / 2) as u8
}

/// Rec. 601 luma, used as the denoising guide channel.
#[inline]
pub fn luma(p: Rgb) -> f32 {
    0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32
}

/// Converts RGB to `(h, s, l)` with `h` in `[0, 1)` and `s`, `l` in `[0, 1]`.
pub fn rgb_to_hsl(p: Rgb) -> (f64, f64, f64) {
    let r = p[0] as f64 / 255.0;
    let g = p[1] as f64 / 255.0;
    let b = p[2] as f64 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let l = (max + min) / 2.0;
    let delta = max - min;
    if delta <= 0.0 {
        return (0.0, 0.0, l);
    }
    let s = delta / (1.0 - (2.0 * l - 1.0).abs());
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = (h / 6.0).rem_euclid(1.0);
    (h, s.min(1.0), l)
}

/// Parses `#rrggbb` (the leading `#` is optional).
pub fn parse_hex_color(s: &str) -> Option<Rgb> {
    let s = s.trim().trim_start_matches('#');
    if s.len() != 6 {
        return None;
    }
    let v = u32::from_str_radix(s, 16).ok()?;
    Some([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

pub fn hex_color(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_red_hsl() {
        let (h, s, l) = rgb_to_hsl([255, 0, 0]);
        assert_eq!(h, 0.0);
        assert_eq!(s, 1.0);
        assert!((l - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gray_has_zero_saturation() {
        let (_, s, l) = rgb_to_hsl([128, 128, 128]);
        assert_eq!(s, 0.0);
        assert!((l - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn hue_wraps_into_unit_interval() {
        // magenta-ish red has negative raw hue
        let (h, _, _) = rgb_to_hsl([255, 0, 10]);
        assert!((0.0..1.0).contains(&h));
        assert!(h > 0.9);
    }

    #[test]
    fn png_round_trip() {
        let mut img = RasterImage::filled(7, 5, [10, 20, 30]);
        img.set(3, 2, [200, 100, 0]);
        let back = RasterImage::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(RasterImage::new(0, 3, vec![]).is_err());
        assert!(RasterImage::new(2, 2, vec![[0; 3]; 3]).is_err());
    }

    #[test]
    fn hex_colors() {
        assert_eq!(parse_hex_color("#1f77b4"), Some([0x1f, 0x77, 0xb4]));
        assert_eq!(hex_color([255, 127, 14]), "#ff7f0e");
        assert_eq!(parse_hex_color("nope"), None);
    }
}
