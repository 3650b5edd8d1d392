//! Convergence diagnostics over multiple chains of one scalar.

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Split potential scale reduction: each chain is halved, then
/// `sqrt(((n-1)/n W + B/n) / W)`. Constant input gives 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .filter(|h| h.len() >= 2)
        .collect();
    if halves.len() < 2 {
        return f64::NAN;
    }
    let n = halves.iter().map(|h| h.len()).min().unwrap() as f64;
    let w = halves.iter().map(|h| var(h)).sum::<f64>() / halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let b_over_n = var(&means);
    if w <= 0.0 {
        return if b_over_n <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b_over_n) / w).sqrt()
}

fn autocov(c: &[f64], lag: usize) -> f64 {
    let m = mean(c);
    let n = c.len();
    (0..n - lag).map(|i| (c[i] - m) * (c[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive sequence
/// over paired autocorrelations.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let w = chains.iter().map(|c| var(&c[..n])).sum::<f64>() / m as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let b_over_n = if m > 1 { var(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus <= 0.0 {
        return (m * n) as f64;
    }
    let rho = |t: usize| {
        let acov = chains.iter().map(|c| autocov(&c[..n], t)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut sum = 0.0;
    let mut t = 1;
    let mut prev_pair = f64::INFINITY;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        // enforce a monotone sequence of pair sums
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    // antithetic chains are capped at mn log10(mn) draws
    let tau = (1.0 + 2.0 * sum).max(1.0 / ((m * n) as f64).log10().max(1.0));
    (m * n) as f64 / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).map(|x: f64| x + shift).collect()
    }

    #[test]
    fn iid_chains_converged() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| iid(s, 2000, 0.0)).collect();
        let r = split_rhat(&chains);
        assert!((r - 1.0).abs() < 0.01, "{r}");
        let e = ess(&chains);
        assert!(e > 6000.0 && e < 10000.0, "{e}");
    }

    #[test]
    fn shifted_chain_flagged() {
        let chains = vec![iid(1, 1000, 0.0), iid(2, 1000, 0.0), iid(3, 1000, 3.0)];
        assert!(split_rhat(&chains) > 1.5);
    }

    #[test]
    fn drifting_chain_flagged_by_split() {
        let c: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        assert!(split_rhat(&[c.clone(), c]) > 1.5);
    }

    #[test]
    fn autocorrelated_chain_has_small_ess() {
        // AR(1) with coefficient 0.9: ESS ~ n (1 - 0.9) / (1 + 0.9)
        let noise = iid(9, 20000, 0.0);
        let mut x = vec![0.0; noise.len()];
        for i in 1..x.len() {
            x[i] = 0.9 * x[i - 1] + noise[i];
        }
        let e = ess(&[x]);
        let expect = 20000.0 * 0.1 / 1.9;
        assert!((e / expect - 1.0).abs() < 0.3, "{e} vs {expect}");
    }

    #[test]
    fn constant_chains() {
        let c = vec![vec![2.0; 10], vec![2.0; 10]];
        assert_eq!(split_rhat(&c), 1.0);
    }
}
