//! Image preparation: user edits, resolution enhancement and the two
//! binarization modes used ahead of OCR.

mod edits;
mod enhance;
mod nlm;
mod threshold;

use thiserror::Error;

pub use edits::{apply_edits, border_median, crop, EditList, RegionMask};
pub use enhance::{
    enhance, sharpen, EnhanceParams, EnhanceStages, Enhancer, Lanczos3Upscaler, Upscaler,
};
pub use nlm::{nlm_denoise, NlmParams};
pub use threshold::{binarize, BinarizeMode, BinarizedImage, RegionKind};

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("edit #{index} is invalid: {reason}")]
    MaskOutOfBounds { index: usize, reason: String },
    #[error("image too small to enhance ({width}x{height}); both sides must exceed 4 px")]
    Degenerate { width: usize, height: usize },
}
