//! Posterior functionals: survival bands, RMST and the pooled median, all
//! in closed form per draw.

use serde::{Deserialize, Serialize};

use crate::intervals::IntervalGrid;
use crate::sampler::MetaPosterior;
use crate::MetaError;

/// `S(t) = exp(-sum lambda_k * overlap_k)` with `lambda_k = exp(log_hazards[k])`.
pub fn survival_at(log_hazards: &[f64], grid: &IntervalGrid, t: f64) -> f64 {
    let c = grid.cuts();
    let mut cum = 0.0;
    for (k, &lh) in log_hazards.iter().enumerate() {
        if t <= c[k] {
            break;
        }
        cum += lh.exp() * (t.min(c[k + 1]) - c[k]);
    }
    (-cum).exp()
}

/// `int_0^h S(t) dt`, each interval by its exponential antiderivative.
pub fn rmst_of(log_hazards: &[f64], grid: &IntervalGrid, h: f64) -> f64 {
    let c = grid.cuts();
    let mut s0 = 1.0;
    let mut area = 0.0;
    for (k, &lh) in log_hazards.iter().enumerate() {
        if h <= c[k] {
            break;
        }
        let dt = h.min(c[k + 1]) - c[k];
        let lam = lh.exp();
        let x = lam * dt;
        // (1 - e^{-x}) / lam, stable for tiny hazards
        area += if x < 1e-8 { s0 * dt * (1.0 - 0.5 * x) } else { s0 * -(-x).exp_m1() / lam };
        s0 *= (-x).exp();
    }
    area
}

/// First `t` with `S(t) <= 0.5`, solved inside the crossing interval.
pub fn median_of(log_hazards: &[f64], grid: &IntervalGrid) -> Option<f64> {
    let c = grid.cuts();
    let target = std::f64::consts::LN_2;
    let mut cum = 0.0;
    for (k, &lh) in log_hazards.iter().enumerate() {
        let lam = lh.exp();
        let next = cum + lam * (c[k + 1] - c[k]);
        if next >= target && lam > 0.0 {
            return Some(c[k] + (target - cum) / lam);
        }
        cum = next;
    }
    None
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalBand {
    pub time: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

fn bands(
    posterior: &MetaPosterior,
    grid: &IntervalGrid,
    times: &[f64],
    hazards: impl Fn(&crate::MetaParams) -> &[f64],
) -> Result<Vec<SurvivalBand>, MetaError> {
    if posterior.draws.is_empty() {
        return Err(MetaError::EmptyPosterior);
    }
    times.iter().try_for_each(|&t| grid.check_time(t))?;
    Ok(times
        .iter()
        .map(|&t| {
            let mut v: Vec<f64> = posterior.draws.iter().map(|d| survival_at(hazards(d), grid, t)).collect();
            v.sort_by(f64::total_cmp);
            SurvivalBand {
                time: t,
                median: quantile(&v, 0.5),
                lower: quantile(&v, 0.025),
                upper: quantile(&v, 0.975),
            }
        })
        .collect())
}

/// Pointwise posterior median and 95% band of the pooled curve.
pub fn pooled_survival(posterior: &MetaPosterior, grid: &IntervalGrid, times: &[f64]) -> Result<Vec<SurvivalBand>, MetaError> {
    bands(posterior, grid, times, |d| &d.a)
}

/// The same band for study `s`.
pub fn study_survival(
    posterior: &MetaPosterior,
    grid: &IntervalGrid,
    times: &[f64],
    s: usize,
) -> Result<Vec<SurvivalBand>, MetaError> {
    if posterior.draws.first().is_some_and(|d| s >= d.alpha.len()) {
        return Err(MetaError::Shape(format!("no study {s}")));
    }
    bands(posterior, grid, times, |d| &d.alpha[s])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmstSummary {
    pub horizon: f64,
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

pub fn rmst(posterior: &MetaPosterior, grid: &IntervalGrid, horizon: f64) -> Result<RmstSummary, MetaError> {
    if posterior.draws.is_empty() {
        return Err(MetaError::EmptyPosterior);
    }
    grid.check_time(horizon)?;
    let values: Vec<f64> = posterior.draws.iter().map(|d| rmst_of(&d.a, grid, horizon)).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(RmstSummary {
        horizon,
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: quantile(&sorted, 0.5),
        q025: quantile(&sorted, 0.025),
        q975: quantile(&sorted, 0.975),
        values,
    })
}

/// Posterior of the pooled median over draws that reach 0.5 before the grid
/// end; the others are counted in `not_reached`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMedian {
    pub median: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub reached: usize,
    pub not_reached: usize,
}

pub fn estimate_pooled_median(posterior: &MetaPosterior, grid: &IntervalGrid) -> PooledMedian {
    let mut v: Vec<f64> = posterior.draws.iter().filter_map(|d| median_of(&d.a, grid)).collect();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| (!v.is_empty()).then(|| quantile(&v, p));
    PooledMedian {
        median: q(0.5),
        ci_low: q(0.025),
        ci_high: q(0.975),
        reached: v.len(),
        not_reached: posterior.draws.len() - v.len(),
    }
}
