//! Individual patient data: product-limit estimation, medians, iterative
//! reconstruction from a digitized curve plus risk table, and overlay
//! validation.

mod guyot;
mod io;
mod km;
mod overlay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use guyot::{reconstruct_ipd, reconstruct_ipd_with_cap, AnchorCheck, Reconstruction, ReconDiagnostics, MAX_ITERATIONS};
pub use io::{read_ipd_csv, write_ipd_csv, IpdCsvError};
pub use km::{km_estimate, median_survival, Estimate, MedianSurvival};
pub use overlay::{overlay_check, overlay_check_with, OverlayReport, OVERLAY_TOLERANCE};

#[derive(Debug, Error, PartialEq)]
pub enum ReconError {
    #[error("invalid risk table: {0}")]
    InvalidRiskTable(String),
    #[error("digitized curve is empty")]
    EmptyCurve,
    #[error("reconstruction did not match the risk table after {} iterations: {}", .0.diagnostics.iterations, .0.diagnostics.summary())]
    ReconstructionDiverged(Box<Reconstruction>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpdRecord {
    pub time: f64,
    /// 1 = event, 0 = censored.
    pub status: u8,
    pub group: String,
}

impl IpdRecord {
    pub fn new(time: f64, status: u8, group: impl Into<String>) -> Self {
        Self {
            time,
            status,
            group: group.into(),
        }
    }
}

/// Right-continuous product-limit step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub step_times: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Risk-set size just before each step.
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub group: String,
}

impl SurvivalCurve {
    /// `S(t)`: 1 before the first step.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.step_times.partition_point(|&s| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.probabilities[idx - 1]
        }
    }

    /// A curve through explicit `(time, S)` steps, without risk-set data.
    pub fn from_steps(steps: &[(f64, f64)], group: impl Into<String>) -> Self {
        Self {
            step_times: steps.iter().map(|s| s.0).collect(),
            probabilities: steps.iter().map(|s| s.1).collect(),
            at_risk: vec![0; steps.len()],
            events: vec![0; steps.len()],
            group: group.into(),
        }
    }
}

/// Ascending `(t, s)` points for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitizedCurve {
    pub points: Vec<(f64, f64)>,
    pub group: String,
}

/// Numbers at risk at shared anchor times, one row per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskTable {
    pub anchor_times: Vec<f64>,
    pub counts: Vec<Vec<u32>>,
}

/// One group's row of a risk table.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub anchor_times: Vec<f64>,
    pub counts: Vec<u32>,
}

impl RiskRow {
    pub fn validate(&self) -> Result<(), ReconError> {
        let bad = |m: String| Err(ReconError::InvalidRiskTable(m));
        if self.anchor_times.is_empty() {
            return bad("no anchor times".into());
        }
        if self.anchor_times.len() != self.counts.len() {
            return bad(format!(
                "{} anchors but {} counts",
                self.anchor_times.len(),
                self.counts.len()
            ));
        }
        if self.anchor_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("anchor times must be finite and non-negative".into());
        }
        if self.anchor_times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("anchor times must be strictly increasing".into());
        }
        if self.counts[0] < 1 {
            return bad("first count must be at least 1".into());
        }
        if let Some(i) = self.counts.windows(2).position(|w| w[1] > w[0]) {
            return bad(format!(
                "counts increase from {} to {} at anchor {}",
                self.counts[i],
                self.counts[i + 1],
                self.anchor_times[i + 1]
            ));
        }
        Ok(())
    }
}

impl RiskTable {
    pub fn row(&self, group: usize) -> RiskRow {
        RiskRow {
            anchor_times: self.anchor_times.clone(),
            counts: self.counts[group].clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ReconError> {
        if self.counts.is_empty() {
            return Err(ReconError::InvalidRiskTable("no groups".into()));
        }
        (0..self.counts.len()).try_for_each(|g| self.row(g).validate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn risk_rows_validate() {
        let ok = RiskRow {
            anchor_times: vec![0.0, 6.0, 12.0],
            counts: vec![10, 5, 5],
        };
        assert!(ok.validate().is_ok());
        let rising = RiskRow {
            counts: vec![10, 11, 5],
            ..ok.clone()
        };
        assert!(matches!(rising.validate(), Err(ReconError::InvalidRiskTable(_))));
        let empty_start = RiskRow {
            counts: vec![0, 0, 0],
            ..ok.clone()
        };
        assert!(empty_start.validate().is_err());
        let short = RiskRow {
            counts: vec![3],
            ..ok
        };
        assert!(short.validate().is_err());
    }

    #[test]
    fn curve_eval_is_right_continuous() {
        let c = SurvivalCurve::from_steps(&[(1.0, 0.5), (2.0, 0.25)], "g");
        assert_eq!(c.eval(0.99), 1.0);
        assert_eq!(c.eval(1.0), 0.5);
        assert_eq!(c.eval(2.5), 0.25);
    }
}
