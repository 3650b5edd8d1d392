//! Upscale, resize, sharpen, denoise.

use image::imageops::{self, FilterType};

use super::nlm::{nlm_denoise, NlmParams};
use super::PrepError;
use crate::raster::RasterImage;

/// A 2x super-resolution backend.
pub trait Upscaler: Send + Sync {
    fn name(&self) -> &str;
    fn upscale2x(&self, image: &RasterImage) -> RasterImage;
}

/// Deterministic Lanczos-3 resampling to twice the input size.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lanczos3Upscaler;

impl Upscaler for Lanczos3Upscaler {
    fn name(&self) -> &str {
        "lanczos3"
    }

    fn upscale2x(&self, image: &RasterImage) -> RasterImage {
        resize(image, image.width() * 2, image.height() * 2)
    }
}

fn resize(image: &RasterImage, width: usize, height: usize) -> RasterImage {
    if width == image.width() && height == image.height() {
        return image.clone();
    }
    let out = imageops::resize(
        &image.to_rgb_image(),
        width as u32,
        height as u32,
        FilterType::Lanczos3,
    );
    RasterImage::from_rgb_image(&out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceParams {
    /// Long edge after the fixed-target resize; `None` skips the resize.
    pub target_long_edge: Option<usize>,
    pub sharpen: bool,
    /// `None` skips denoising.
    pub denoise: Option<NlmParams>,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            target_long_edge: Some(1600),
            sharpen: true,
            denoise: Some(NlmParams::default()),
        }
    }
}

/// Every intermediate of one enhancement run.
#[derive(Debug, Clone)]
pub struct EnhanceStages {
    pub upscaled: RasterImage,
    pub resized: RasterImage,
    pub sharpened: RasterImage,
    pub denoised: RasterImage,
}

pub struct Enhancer {
    upscaler: Box<dyn Upscaler>,
    params: EnhanceParams,
}

impl Default for Enhancer {
    fn default() -> Self {
        Self::new(Box::new(Lanczos3Upscaler), EnhanceParams::default())
    }
}

impl Enhancer {
    pub fn new(upscaler: Box<dyn Upscaler>, params: EnhanceParams) -> Self {
        Self { upscaler, params }
    }

    pub fn upscaler_name(&self) -> &str {
        self.upscaler.name()
    }

    pub fn params(&self) -> &EnhanceParams {
        &self.params
    }

    pub fn stages(&self, image: &RasterImage) -> Result<EnhanceStages, PrepError> {
        if image.width() <= 4 || image.height() <= 4 {
            return Err(PrepError::Degenerate {
                width: image.width(),
                height: image.height(),
            });
        }
        let upscaled = self.upscaler.upscale2x(image);
        let resized = match self.params.target_long_edge {
            Some(edge) => {
                let (w, h) = target_dims(upscaled.width(), upscaled.height(), edge);
                resize(&upscaled, w, h)
            }
            None => upscaled.clone(),
        };
        let sharpened = if self.params.sharpen {
            sharpen(&resized)
        } else {
            resized.clone()
        };
        let denoised = match &self.params.denoise {
            Some(p) => nlm_denoise(&sharpened, p),
            None => sharpened.clone(),
        };
        Ok(EnhanceStages {
            upscaled,
            resized,
            sharpened,
            denoised,
        })
    }

    pub fn enhance(&self, image: &RasterImage) -> Result<RasterImage, PrepError> {
        Ok(self.stages(image)?.denoised)
    }
}

/// Enhances with the default upscaler and parameters.
pub fn enhance(image: &RasterImage) -> Result<RasterImage, PrepError> {
    Enhancer::default().enhance(image)
}

fn target_dims(w: usize, h: usize, long_edge: usize) -> (usize, usize) {
    if w >= h {
        let nh = ((h as f64) * long_edge as f64 / w as f64).round().max(1.0) as usize;
        (long_edge, nh)
    } else {
        let nw = ((w as f64) * long_edge as f64 / h as f64).round().max(1.0) as usize;
        (nw, long_edge)
    }
}

/// One pass of the 3x3 kernel `[[0,-1,0],[-1,5,-1],[0,-1,0]]` per channel,
/// replicating border pixels.
pub fn sharpen(image: &RasterImage) -> RasterImage {
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let c = image.get(x, y);
            let n = [
                image.get(x, up),
                image.get(x, down),
                image.get(left, y),
                image.get(right, y),
            ];
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let v = 5 * c[ch] as i32 - n.iter().map(|p| p[ch] as i32).sum::<i32>();
                px[ch] = v.clamp(0, 255) as u8;
            }
            out.set(x, y, px);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> Enhancer {
        Enhancer::new(
            Box::new(Lanczos3Upscaler),
            EnhanceParams {
                target_long_edge: Some(160),
                sharpen: true,
                denoise: Some(NlmParams {
                    patch: 3,
                    search: 7,
                    h: 10.0,
                }),
            },
        )
    }

    #[test]
    fn upscale_doubles_dimensions() {
        let img = RasterImage::filled(200, 100, [90, 90, 90]);
        let stages = fast().stages(&img).unwrap();
        assert_eq!((stages.upscaled.width(), stages.upscaled.height()), (400, 200));
        assert_eq!((stages.resized.width(), stages.resized.height()), (160, 80));
    }

    #[test]
    fn default_target_is_1600_long_edge() {
        assert_eq!(target_dims(400, 200, 1600), (1600, 800));
        assert_eq!(target_dims(300, 900, 1600), (533, 1600));
    }

    #[test]
    fn constant_gray_stays_constant() {
        let img = RasterImage::filled(30, 20, [128, 128, 128]);
        let out = fast().enhance(&img).unwrap();
        assert!(out.pixels().iter().all(|&p| p == [128, 128, 128]));
    }

    #[test]
    fn degenerate_images_rejected() {
        let img = RasterImage::filled(4, 100, [0; 3]);
        assert!(matches!(enhance(&img), Err(PrepError::Degenerate { .. })));
    }

    #[test]
    fn sharpen_increases_edge_gradient() {
        let mut img = RasterImage::filled(20, 10, [60; 3]);
        for y in 0..10 {
            for x in 10..20 {
                img.set(x, y, [180; 3]);
            }
        }
        let grad = |im: &RasterImage| (im.get(10, 5)[0] as i32 - im.get(9, 5)[0] as i32).abs();
        let out = sharpen(&img);
        assert!(grad(&out) > grad(&img), "{} vs {}", grad(&out), grad(&img));
    }

    #[test]
    fn enhancement_is_deterministic() {
        let px = (0..25 * 18)
            .map(|i| [(i * 13 % 256) as u8, (i * 7 % 256) as u8, (i % 256) as u8])
            .collect();
        let img = RasterImage::new(25, 18, px).unwrap();
        let a = fast().enhance(&img).unwrap();
        let b = fast().enhance(&img).unwrap();
        assert_eq!(a.encode_png().unwrap(), b.encode_png().unwrap());
    }
}
