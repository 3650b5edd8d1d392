//! Product-limit estimator and median survival with a log(-log) Greenwood
//! interval.

use serde::{Serialize, Serializer};

use super::{IpdRecord, SurvivalCurve};

const Z975: f64 = 1.959963984540054;

/// Events precede censorings at tied times, so a subject censored at an
/// event time is still in that event's risk set.
pub fn km_estimate(records: &[IpdRecord]) -> SurvivalCurve {
    let group = records.first().map(|r| r.group.clone()).unwrap_or_default();
    let mut sorted: Vec<&IpdRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.status.cmp(&a.status)));
    let n = sorted.len();
    let mut curve = SurvivalCurve {
        step_times: vec![],
        probabilities: vec![],
        at_risk: vec![],
        events: vec![],
        group,
    };
    let mut s = 1.0;
    let mut i = 0;
    while i < n {
        let t = sorted[i].time;
        let at_risk = n - i;
        let mut d = 0;
        let mut j = i;
        while j < n && sorted[j].time == t {
            d += sorted[j].status as usize;
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            curve.step_times.push(t);
            curve.probabilities.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        i = j;
    }
    curve
}

/// A time, or `NotReached` when the curve never crosses the level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    At(f64),
    NotReached,
}

impl Estimate {
    pub fn time(&self) -> Option<f64> {
        match self {
            Estimate::At(t) => Some(*t),
            Estimate::NotReached => None,
        }
    }
}

impl Serialize for Estimate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Estimate::At(t) => s.serialize_f64(*t),
            Estimate::NotReached => s.serialize_str("NotReached"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MedianSurvival {
    pub median: Estimate,
    pub ci_low: Estimate,
    pub ci_high: Estimate,
}

/// Median = first step with `S <= 0.5`. The 95% interval runs from where the
/// lower pointwise band first reaches 0.5 to where the upper band does.
pub fn median_survival(curve: &SurvivalCurve) -> MedianSurvival {
    let mut greenwood = 0.0;
    let (mut median, mut low, mut high) = (Estimate::NotReached, Estimate::NotReached, Estimate::NotReached);
    for k in 0..curve.step_times.len() {
        let (n, d) = (curve.at_risk[k] as f64, curve.events[k] as f64);
        let s = curve.probabilities[k];
        let (lower, upper) = if s <= 0.0 || n <= d {
            (0.0, 0.0)
        } else {
            greenwood += d / (n * (n - d));
            let ls = s.ln();
            let se = greenwood.sqrt() / ls.abs();
            (s.powf((Z975 * se).exp()), s.powf((-Z975 * se).exp()))
        };
        let t = curve.step_times[k];
        if median == Estimate::NotReached && s <= 0.5 {
            median = Estimate::At(t);
        }
        if low == Estimate::NotReached && lower <= 0.5 {
            low = Estimate::At(t);
        }
        if high == Estimate::NotReached && upper <= 0.5 {
            high = Estimate::At(t);
        }
    }
    MedianSurvival {
        median,
        ci_low: low,
        ci_high: high,
    }
}
