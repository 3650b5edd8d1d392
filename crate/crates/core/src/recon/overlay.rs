//! Reconstructed-vs-digitized agreement.

use serde::Serialize;

use super::{km_estimate, DigitizedCurve, IpdRecord};

pub const OVERLAY_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlayReport {
    pub max_gap: f64,
    pub pass: bool,
    pub tolerance: f64,
}

/// Largest `|S_rebuilt(t) - s|` over the digitized points.
pub fn overlay_check(original: &DigitizedCurve, records: &[IpdRecord]) -> OverlayReport {
    overlay_check_with(original, records, OVERLAY_TOLERANCE)
}

pub fn overlay_check_with(original: &DigitizedCurve, records: &[IpdRecord], tolerance: f64) -> OverlayReport {
    let km = km_estimate(records);
    let max_gap = original
        .points
        .iter()
        .map(|&(t, s)| (km.eval(t) - s).abs())
        .fold(0.0, f64::max);
    OverlayReport {
        max_gap,
        pass: max_gap <= tolerance,
        tolerance,
    }
}
