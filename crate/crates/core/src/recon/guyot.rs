//! Iterative event/censoring reconstruction against a risk table.
//!
//! Each interval `[a_m, a_{m+1})` starts from the reported count. An initial
//! censoring count comes from the gap between the curve-implied survivors and
//! the next reported count; censorings are spread uniformly over the interval,
//! events are placed at digitized points so the rebuilt product-limit curve
//! tracks the digitized values, and the censoring count is nudged until the
//! rebuilt risk set at `a_{m+1}` equals the report.

use serde::Serialize;

use super::{DigitizedCurve, IpdRecord, ReconError, RiskRow};

pub const MAX_ITERATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorCheck {
    pub time: f64,
    pub reported: u32,
    pub reconstructed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconDiagnostics {
    pub converged: bool,
    /// Largest iteration count used by any interval.
    pub iterations: usize,
    pub anchors: Vec<AnchorCheck>,
    pub events: usize,
    pub censored: usize,
    pub requested_events: Option<usize>,
}

impl ReconDiagnostics {
    pub fn summary(&self) -> String {
        let bad: Vec<String> = self
            .anchors
            .iter()
            .filter(|a| a.reported as usize != a.reconstructed)
            .map(|a| format!("t={} reported {} rebuilt {}", a.time, a.reported, a.reconstructed))
            .collect();
        if bad.is_empty() {
            "all anchors match".into()
        } else {
            bad.join("; ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    pub records: Vec<IpdRecord>,
    pub diagnostics: ReconDiagnostics,
}

struct IntervalRun {
    events: Vec<(f64, usize)>,
    censor_times: Vec<f64>,
    n_end: usize,
    km_end: f64,
}

impl IntervalRun {
    fn event_count(&self) -> usize {
        self.events.iter().map(|e| e.1).sum()
    }
}

/// One pass over an interval's points with a fixed censoring count.
fn run_interval(
    points: &[(f64, f64)],
    n_start: usize,
    censorings: usize,
    window: (f64, f64),
    km_start: f64,
    event_budget: Option<usize>,
) -> IntervalRun {
    let (start, end) = window;
    let step = (end - start) / (censorings + 1) as f64;
    let planned: Vec<f64> = (1..=censorings).map(|j| start + j as f64 * step).collect();
    let mut censor_times = Vec::with_capacity(censorings);
    let mut n = n_start;
    let mut km = km_start;
    let mut next_censor = 0;
    let mut budget = event_budget;
    let mut events = Vec::new();
    let censor_before = |limit: f64, n: &mut usize, next: &mut usize, out: &mut Vec<f64>| {
        while *next < planned.len() && planned[*next] < limit {
            if *n > 0 {
                *n -= 1;
                out.push(planned[*next]);
            }
            *next += 1;
        }
    };
    for &(t, s) in points {
        censor_before(t, &mut n, &mut next_censor, &mut censor_times);
        if n == 0 || km <= 0.0 {
            continue;
        }
        let raw = (n as f64 * (1.0 - s / km)).round().max(0.0) as usize;
        let mut d = raw.min(n);
        if let Some(b) = budget.as_mut() {
            d = d.min(*b);
            *b -= d;
        }
        if d > 0 {
            km *= 1.0 - d as f64 / n as f64;
            n -= d;
            events.push((t, d));
        }
    }
    censor_before(f64::INFINITY, &mut n, &mut next_censor, &mut censor_times);
    IntervalRun {
        events,
        censor_times,
        n_end: n,
        km_end: km,
    }
}

/// Sorted, clamped, non-increasing points with every anchor present.
fn prepare_points(curve: &DigitizedCurve, anchors: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|&(t, s)| (t, s.clamp(0.0, 1.0)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut clean: Vec<(f64, f64)> = Vec::with_capacity(pts.len() + anchors.len());
    for (t, s) in pts {
        let s = clean.last().map_or(s, |p| s.min(p.1));
        match clean.last_mut() {
            Some(last) if last.0 == t => last.1 = s,
            _ => clean.push((t, s)),
        }
    }
    for &a in anchors {
        let idx = clean.partition_point(|p| p.0 < a);
        if idx < clean.len() && clean[idx].0 == a {
            continue;
        }
        let s = if idx == 0 { 1.0 } else { clean[idx - 1].1 };
        clean.insert(idx, (a, s));
    }
    clean
}

/// Rebuilds individual records for one group. Fails with
/// `ReconstructionDiverged` (carrying the best iterate) when some anchor's
/// rebuilt risk set still differs from the report after the iteration cap.
pub fn reconstruct_ipd(
    curve: &DigitizedCurve,
    risk: &RiskRow,
    total_events: Option<usize>,
) -> Result<Reconstruction, ReconError> {
    reconstruct_ipd_with_cap(curve, risk, total_events, MAX_ITERATIONS)
}

/// [`reconstruct_ipd`] with an explicit per-interval iteration cap.
pub fn reconstruct_ipd_with_cap(
    curve: &DigitizedCurve,
    risk: &RiskRow,
    total_events: Option<usize>,
    max_iterations: usize,
) -> Result<Reconstruction, ReconError> {
    let max_iterations = max_iterations.max(1);
    risk.validate()?;
    if curve.points.iter().all(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(ReconError::EmptyCurve);
    }
    let anchors = &risk.anchor_times;
    let m_count = anchors.len();
    let curve_end = curve
        .points
        .iter()
        .filter(|p| p.0.is_finite())
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let pts = prepare_points(curve, anchors);
    let bounds: Vec<usize> = (0..m_count)
        .map(|m| if m == 0 { 0 } else { pts.partition_point(|p| p.0 < anchors[m]) })
        .chain(std::iter::once(pts.len()))
        .collect();

    let group = curve.group.clone();
    let mut records = Vec::new();
    let mut km = 1.0;
    let mut max_iter = 0;
    let mut censored_so_far = 0usize;
    let mut events_so_far = 0usize;

    for m in 0..m_count {
        let n_start = risk.counts[m] as usize;
        let (lo, hi) = (bounds[m], bounds[m + 1]);
        let seg = &pts[lo..hi];
        let a = anchors[m];
        let last = m + 1 == m_count;
        let end = if last {
            curve_end.max(a)
        } else if curve_end > a {
            anchors[m + 1].min(curve_end)
        } else {
            anchors[m + 1]
        };
        if n_start == 0 || seg.is_empty() {
            continue;
        }
        let s_before = if lo == 0 { 1.0 } else { pts[lo - 1].1 };
        let s_upper = seg[seg.len() - 1].1;

        let (run, iters) = if !last {
            let target = risk.counts[m + 1] as usize;
            let implied = if s_before > 0.0 {
                n_start as f64 * s_upper / s_before
            } else {
                0.0
            };
            let mut cens = (implied - target as f64).round().clamp(0.0, (n_start - target) as f64) as usize;
            let mut capped = false;
            let mut best: Option<(usize, IntervalRun)> = None;
            let mut iters = 0;
            for _ in 0..max_iterations {
                iters += 1;
                let budget = capped.then(|| n_start.saturating_sub(target + cens));
                let run = run_interval(seg, n_start, cens, (a, end), km, budget);
                let diff = run.n_end as i64 - target as i64;
                let better = best.as_ref().is_none_or(|(gap, _)| diff.unsigned_abs() < *gap as u64);
                if better {
                    best = Some((diff.unsigned_abs() as usize, run));
                }
                if diff == 0 {
                    break;
                }
                if diff > 0 {
                    cens += diff as usize;
                } else if cens > 0 {
                    cens = cens.saturating_sub(diff.unsigned_abs() as usize);
                } else {
                    capped = true;
                }
            }
            (best.expect("at least one iteration").1, iters)
        } else {
            match total_events {
                Some(total) => {
                    let needed = total.saturating_sub(events_so_far);
                    let mut cens = 0usize;
                    let mut best: Option<(usize, IntervalRun)> = None;
                    let mut iters = 0;
                    for _ in 0..max_iterations {
                        iters += 1;
                        let run = run_interval(seg, n_start, cens, (a, end), km, Some(needed));
                        let gap = needed - run.event_count();
                        let better = best.as_ref().is_none_or(|(g, _)| gap < *g);
                        if better {
                            best = Some((gap, run));
                        }
                        if gap == 0 || cens == 0 {
                            break;
                        }
                        cens = cens.saturating_sub(gap);
                    }
                    // when the budget caps events, leftover subjects are censored at the end
                    (best.expect("at least one iteration").1, iters)
                }
                None => {
                    let span = a - anchors[0];
                    let cens = if span > 0.0 {
                        // absorb float noise so x.5 ties round the same way at any time scale
                        (censored_so_far as f64 * (end - a) / span + 1e-9).round() as usize
                    } else {
                        0
                    };
                    (run_interval(seg, n_start, cens.min(n_start), (a, end), km, None), 1)
                }
            }
        };
        max_iter = max_iter.max(iters);
        km = run.km_end;
        let ev = run.event_count();
        events_so_far += ev;
        censored_so_far += run.censor_times.len();
        for &(t, d) in &run.events {
            records.extend(std::iter::repeat_n(IpdRecord::new(t, 1, group.clone()), d));
        }
        for &t in &run.censor_times {
            records.push(IpdRecord::new(t, 0, group.clone()));
        }
        if last {
            records.extend(std::iter::repeat_n(IpdRecord::new(end, 0, group.clone()), run.n_end));
        }
    }

    records.sort_by(|a, b| a.time.total_cmp(&b.time).then(b.status.cmp(&a.status)));
    let checks: Vec<AnchorCheck> = anchors
        .iter()
        .zip(&risk.counts)
        .map(|(&t, &reported)| AnchorCheck {
            time: t,
            reported,
            reconstructed: records.iter().filter(|r| r.time >= t).count(),
        })
        .collect();
    let converged = checks.iter().all(|c| c.reported as usize == c.reconstructed);
    let events = records.iter().filter(|r| r.status == 1).count();
    let diagnostics = ReconDiagnostics {
        converged,
        iterations: max_iter,
        anchors: checks,
        events,
        censored: records.len() - events,
        requested_events: total_events,
    };
    let out = Reconstruction {
        records,
        diagnostics,
    };
    if converged {
        Ok(out)
    } else {
        Err(ReconError::ReconstructionDiverged(Box::new(out)))
    }
}
