//! Image-to-IPD building blocks: image preparation, axis geometry, curve
//! extraction, metadata extraction and IPD reconstruction.

pub mod curves;
pub mod font;
pub mod geometry;
pub mod prep;
pub mod raster;
pub mod recon;
pub mod mmpu;
