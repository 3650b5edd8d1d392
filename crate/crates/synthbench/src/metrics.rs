//! Pointwise and integrated absolute error between two survival curves on
//! horizon-normalized time.

use kmgpt_core::recon::{median_survival, SurvivalCurve};
use serde::{Serialize, Serializer};

use crate::SynthError;

pub const AE_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MosAe {
    Value(f64),
    NotComparable,
}

impl MosAe {
    pub fn value(self) -> Option<f64> {
        match self {
            MosAe::Value(v) => Some(v),
            MosAe::NotComparable => None,
        }
    }
}

impl Serialize for MosAe {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MosAe::Value(v) => s.serialize_f64(*v),
            MosAe::NotComparable => s.serialize_str("NotComparable"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub ae_series: Vec<(f64, f64)>,
    pub iae: f64,
    pub mos_ae: MosAe,
    pub success: bool,
}

impl MetricsReport {
    pub fn median_ae(&self) -> f64 {
        let mut v: Vec<f64> = self.ae_series.iter().map(|p| p.1).collect();
        median(&mut v).unwrap_or(0.0)
    }

    pub fn max_ae(&self) -> f64 {
        self.ae_series.iter().map(|p| p.1).fold(0.0, f64::max)
    }
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// `AE(u) = |S_truth(u h) - S_recon(u h)|` on `u = i / 999`, IAE by the
/// trapezoid rule, median error divided by the horizon.
pub fn score(truth: &SurvivalCurve, recon: &SurvivalCurve, horizon: f64) -> Result<MetricsReport, SynthError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SynthError::InvalidHorizon(horizon));
    }
    let last = (AE_GRID_POINTS - 1) as f64;
    let ae_series: Vec<(f64, f64)> = (0..AE_GRID_POINTS)
        .map(|i| {
            let u = i as f64 / last;
            let t = u * horizon;
            (u, (truth.eval(t) - recon.eval(t)).abs())
        })
        .collect();
    let iae = ae_series.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    let mos_ae = match (median_survival(truth).median.time(), median_survival(recon).median.time()) {
        (Some(a), Some(b)) => MosAe::Value((a - b).abs() / horizon),
        _ => MosAe::NotComparable,
    };
    Ok(MetricsReport {
        ae_series,
        iae,
        mos_ae,
        success: true,
    })
}
