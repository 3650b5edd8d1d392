//! Column-envelope digitization of a traced step curve and repair of
//! low-consensus spans.
//!
//! A step curve drawn with stroke thickness `w` shows, in each column, a top
//! edge `T` and bottom edge `B`. On flat runs the center is `T + h` (with
//! `h = (w - 1) / 2`); across a vertical drop the top edge belongs to the
//! level before the drop and the bottom edge to the level after it. Reading
//! `T` half a stroke to the right and `B` half a stroke to the left gives two
//! center estimates that agree everywhere except exactly at a drop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CurveError, CurveTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnPoint {
    pub u: usize,
    /// Estimated curve center row.
    pub v: f64,
    /// Mean consensus score of the column's pixels.
    pub score: f64,
}

#[derive(Default)]
struct Column {
    top: Option<usize>,
    bottom: Option<usize>,
    all_top: usize,
    all_bottom: usize,
    score_sum: f64,
    n: usize,
}

fn at(map: &BTreeMap<usize, (usize, usize)>, x: f64, pick: fn(&(usize, usize)) -> usize) -> Option<f64> {
    if x < 0.0 {
        return None;
    }
    let lo = x.floor() as usize;
    let hi = x.ceil() as usize;
    match (map.get(&lo), map.get(&hi)) {
        (Some(a), Some(b)) => {
            let f = x - lo as f64;
            Some(pick(a) as f64 * (1.0 - f) + pick(b) as f64 * f)
        }
        (Some(a), None) => Some(pick(a) as f64),
        (None, Some(b)) => Some(pick(b) as f64),
        (None, None) => None,
    }
}

/// One point per occupied column from `(u, v, score)` pixels. Only pixels with
/// a non-negative score shape the envelope.
pub fn digitize_columns(pixels: &[(usize, usize, f64)]) -> Vec<ColumnPoint> {
    let mut cols: BTreeMap<usize, Column> = BTreeMap::new();
    for &(u, v, score) in pixels {
        let c = cols.entry(u).or_insert_with(|| Column {
            all_top: v,
            all_bottom: v,
            ..Default::default()
        });
        c.all_top = c.all_top.min(v);
        c.all_bottom = c.all_bottom.max(v);
        c.score_sum += score;
        c.n += 1;
        if score >= 0.0 {
            c.top = Some(c.top.map_or(v, |t| t.min(v)));
            c.bottom = Some(c.bottom.map_or(v, |b| b.max(v)));
        }
    }
    let edges: BTreeMap<usize, (usize, usize)> = cols
        .iter()
        .filter_map(|(&u, c)| Some((u, (c.top?, c.bottom?))))
        .collect();
    let mut heights: Vec<usize> = edges.values().map(|(t, b)| b - t + 1).collect();
    heights.sort_unstable();
    let w = if heights.is_empty() {
        1.0
    } else {
        heights[(heights.len() - 1) / 10] as f64
    };
    let h = (w - 1.0) / 2.0;

    let mut out = Vec::with_capacity(cols.len());
    let mut prev: Option<f64> = None;
    for (&u, c) in &cols {
        let score = c.score_sum / c.n as f64;
        let v = if let Some(&(t, b)) = edges.get(&u) {
            let est_t = at(&edges, u as f64 + h, |e| e.0).map(|x| x + h);
            let est_b = at(&edges, u as f64 - h, |e| e.1).map(|x| x - h);
            match (est_t, est_b) {
                (Some(a), Some(b)) if (a - b).abs() <= 1.0 => (a + b) / 2.0,
                (Some(a), Some(b)) => match prev {
                    Some(p) if (b - p).abs() < (a - p).abs() => b,
                    _ => a,
                },
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => (t + b) as f64 / 2.0,
            }
        } else {
            (c.all_top + c.all_bottom) as f64 / 2.0
        };
        prev = Some(v);
        out.push(ColumnPoint { u, v, score });
    }
    out
}

/// Replaces negative-score points by linear interpolation (in `t`) between
/// the nearest confident points of the same trace, holding the end values
/// flat, then enforces a non-increasing curve within `[s_min, s_max]`.
pub fn repair_overlaps(traces: &[CurveTrace], s_bounds: (f64, f64)) -> Result<Vec<CurveTrace>, CurveError> {
    traces
        .iter()
        .map(|trace| {
            let confident: Vec<usize> = (0..trace.points.len()).filter(|&i| trace.scores[i] >= 0.0).collect();
            if confident.is_empty() {
                return Err(CurveError::UnresolvableOverlap { group: trace.group });
            }
            let mut points = trace.points.clone();
            let mut k = 0;
            for i in 0..points.len() {
                if trace.scores[i] >= 0.0 {
                    continue;
                }
                while k < confident.len() && confident[k] < i {
                    k += 1;
                }
                let prev = k.checked_sub(1).map(|j| trace.points[confident[j]]);
                let next = confident.get(k).map(|&j| trace.points[j]);
                let t = points[i].0;
                points[i].1 = match (prev, next) {
                    (Some(a), Some(b)) if b.0 > a.0 => a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0),
                    (Some(a), _) => a.1,
                    (None, Some(b)) => b.1,
                    (None, None) => unreachable!("at least one confident point"),
                };
            }
            let mut running = f64::INFINITY;
            for p in &mut points {
                running = running.min(p.1);
                p.1 = running.clamp(s_bounds.0, s_bounds.1);
            }
            Ok(CurveTrace {
                group: trace.group,
                points,
                pixel_path: trace.pixel_path.clone(),
                scores: trace.scores.clone(),
            })
        })
        .collect()
}
