//! Studies drawn from known piecewise-constant hazards, for checking the
//! posterior against a ground truth.

use kmgpt_core::recon::IpdRecord;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::intervals::IntervalGrid;
use crate::summary::survival_at;

/// Event time by inverting the cumulative hazard at an `Exp(1)` draw;
/// `None` when the draw exceeds the hazard accumulated by the grid end.
fn invert(hazards: &[f64], grid: &IntervalGrid, e: f64) -> Option<f64> {
    let c = grid.cuts();
    let mut cum = 0.0;
    for (k, &h) in hazards.iter().enumerate() {
        let next = cum + h * (c[k + 1] - c[k]);
        if next >= e && h > 0.0 {
            return Some(c[k] + (e - cum) / h);
        }
        cum = next;
    }
    None
}

/// `n` subjects with hazard `hazards[k]` on interval `k`, uniform censoring on
/// `[0, censor_max]` and administrative censoring at the grid end.
pub fn simulate_piecewise<R: Rng + ?Sized>(
    hazards: &[f64],
    grid: &IntervalGrid,
    n: usize,
    censor_max: f64,
    group: &str,
    rng: &mut R,
) -> Vec<IpdRecord> {
    let end = grid.end();
    (0..n)
        .map(|_| {
            let t = invert(hazards, grid, Exp1.sample(rng)).unwrap_or(f64::INFINITY);
            let c = (rng.random::<f64>() * censor_max).min(end);
            if t <= c {
                IpdRecord::new(t, 1, group)
            } else {
                IpdRecord::new(c, 0, group)
            }
        })
        .collect()
}

/// True survival of the generating hazards.
pub fn true_survival(hazards: &[f64], grid: &IntervalGrid, t: f64) -> f64 {
    let logs: Vec<f64> = hazards.iter().map(|h| h.ln()).collect();
    survival_at(&logs, grid, t)
}

/// Three studies around a known pooled hazard, with study log-offsets
/// -0.1, 0 and +0.1 and 300 subjects each.
pub struct ReferenceFixture {
    pub grid: IntervalGrid,
    pub pooled_hazards: Vec<f64>,
    pub studies: Vec<Vec<IpdRecord>>,
}

pub fn reference_fixture(seed: u64) -> ReferenceFixture {
    use rand::SeedableRng;
    let grid = IntervalGrid::new(vec![0.0, 3.0, 6.0, 12.0, 18.0, 24.0]).expect("static grid");
    let pooled_hazards = vec![0.06, 0.05, 0.04, 0.035, 0.03];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let studies = [-0.1f64, 0.0, 0.1]
        .iter()
        .enumerate()
        .map(|(s, off)| {
            let h: Vec<f64> = pooled_hazards.iter().map(|x| x * off.exp()).collect();
            simulate_piecewise(&h, &grid, 300, 60.0, &format!("study{}", s + 1), &mut rng)
        })
        .collect();
    ReferenceFixture {
        grid,
        pooled_hazards,
        studies,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intervals::bin_ipd;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binned_rates_recover_hazards() {
        let grid = IntervalGrid::new(vec![0.0, 2.0, 6.0, 12.0]).unwrap();
        let h = [0.15, 0.08, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let recs = simulate_piecewise(&h, &grid, 40_000, 30.0, "s", &mut rng);
        let st = bin_ipd(&[recs], &grid).unwrap();
        for k in 0..3 {
            let rate = st.d[0][k] as f64 / st.e[0][k];
            assert!((rate / h[k] - 1.0).abs() < 0.05, "{k}: {rate}");
        }
    }

    #[test]
    fn empirical_survival_matches_truth() {
        let grid = IntervalGrid::new(vec![0.0, 3.0, 10.0]).unwrap();
        let h = [0.1, 0.05];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // no censoring before the end
        let recs = simulate_piecewise(&h, &grid, 20_000, 1e9, "s", &mut rng);
        for t in [1.0, 3.0, 7.0] {
            let emp = recs.iter().filter(|r| r.time > t).count() as f64 / recs.len() as f64;
            assert!((emp - true_survival(&h, &grid, t)).abs() < 0.01);
        }
    }
}
