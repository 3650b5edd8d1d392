//! Interval partitions and per-study event/exposure sufficient statistics.

use kmgpt_core::recon::IpdRecord;
use serde::{Deserialize, Serialize};

use crate::MetaError;

pub const DEFAULT_INTERVALS: usize = 8;

/// Cut points `0 = t_0 < t_1 < ... < t_J`; interval `j` is `(t_{j-1}, t_j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalGrid {
    cuts: Vec<f64>,
}

impl IntervalGrid {
    pub fn new(cuts: Vec<f64>) -> Result<Self, MetaError> {
        if cuts.len() < 2 {
            return Err(MetaError::InvalidGrid("need at least one interval".into()));
        }
        if cuts[0] != 0.0 {
            return Err(MetaError::InvalidGrid(format!("first cut must be 0, got {}", cuts[0])));
        }
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(MetaError::InvalidGrid("cut points must be finite".into()));
        }
        if let Some(w) = cuts.windows(2).find(|w| w[1] <= w[0]) {
            return Err(MetaError::InvalidGrid(format!("cuts not increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { cuts })
    }

    /// `j` cuts at pooled event-time quantiles (equal expected events per
    /// interval), the last one at the largest observed time.
    pub fn auto(studies: &[Vec<IpdRecord>], j: usize) -> Result<Self, MetaError> {
        let end = studies.iter().flatten().map(|r| r.time).fold(0.0, f64::max);
        if !(end > 0.0 && end.is_finite()) {
            return Err(MetaError::InvalidGrid("no positive follow-up time".into()));
        }
        let mut events: Vec<f64> = studies
            .iter()
            .flatten()
            .filter(|r| r.status == 1 && r.time > 0.0)
            .map(|r| r.time)
            .collect();
        events.sort_by(f64::total_cmp);
        let mut cuts = vec![0.0];
        for k in 1..j.max(1) {
            let c = if events.is_empty() {
                end * k as f64 / j as f64
            } else {
                quantile(&events, k as f64 / j as f64)
            };
            if c > *cuts.last().unwrap() && c < end {
                cuts.push(c);
            }
        }
        cuts.push(end);
        Self::new(cuts)
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> f64 {
        *self.cuts.last().unwrap()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.cuts[j + 1] - self.cuts[j]
    }

    pub fn check_time(&self, t: f64) -> Result<(), MetaError> {
        if !t.is_finite() || t < 0.0 {
            return Err(MetaError::NonFinite(format!("time {t}")));
        }
        if t > self.end() {
            return Err(MetaError::GridTooShort { time: t, end: self.end() });
        }
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `d[s][j]` events and `e[s][j]` exposure per study and interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySufficientStats {
    pub d: Vec<Vec<u32>>,
    pub e: Vec<Vec<f64>>,
}

impl StudySufficientStats {
    pub fn studies(&self) -> usize {
        self.d.len()
    }

    pub fn intervals(&self) -> usize {
        self.d.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        if self.d.is_empty() || self.d.len() != self.e.len() {
            return Err(MetaError::Shape(format!("{} event rows, {} exposure rows", self.d.len(), self.e.len())));
        }
        let j = self.intervals();
        for (s, (d, e)) in self.d.iter().zip(&self.e).enumerate() {
            if d.len() != j || e.len() != j {
                return Err(MetaError::Shape(format!("study {s} has ragged rows")));
            }
            for (k, (&dk, &ek)) in d.iter().zip(e).enumerate() {
                if !ek.is_finite() || ek < 0.0 {
                    return Err(MetaError::NonFinite(format!("exposure[{s}][{k}] = {ek}")));
                }
                if ek == 0.0 && dk > 0 {
                    return Err(MetaError::Shape(format!("events without exposure at [{s}][{k}]")));
                }
            }
        }
        Ok(())
    }
}

/// Exposure is the overlap of `[0, Y]` with each interval; an event counts in
/// the interval containing its time. Events at time 0 carry no exposure and
/// are skipped.
pub fn bin_ipd(studies: &[Vec<IpdRecord>], grid: &IntervalGrid) -> Result<StudySufficientStats, MetaError> {
    let j = grid.len();
    let cuts = grid.cuts();
    let mut d = vec![vec![0u32; j]; studies.len()];
    let mut e = vec![vec![0.0f64; j]; studies.len()];
    for (s, recs) in studies.iter().enumerate() {
        for r in recs {
            grid.check_time(r.time)?;
            for k in 0..j {
                if r.time <= cuts[k] {
                    break;
                }
                e[s][k] += r.time.min(cuts[k + 1]) - cuts[k];
            }
            if r.status == 1 && r.time > 0.0 {
                let k = cuts[1..].partition_point(|&c| c < r.time);
                d[s][k] += 1;
            }
        }
    }
    Ok(StudySufficientStats { d, e })
}
