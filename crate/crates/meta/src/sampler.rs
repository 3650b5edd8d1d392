//! Adaptive random-walk Metropolis-within-Gibbs over unconstrained
//! coordinates, with joint scale and shift moves along the hierarchy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{ess, split_rhat};
use crate::intervals::{IntervalGrid, StudySufficientStats};
use crate::model::{half_normal_lpdf, normal_lpdf, MetaParams, Model, Priors};
use crate::MetaError;

const TARGET_ACCEPT: f64 = 0.3;
const INIT_JITTER: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub model: Model,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 2000,
            draws: 5000,
            seed: 1,
            model: Model::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaPosterior {
    /// Chain-major: chain 0's draws first.
    pub draws: Vec<MetaParams>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub diagnostics: Vec<ScalarDiagnostic>,
    /// Post-warmup acceptance rate of single-coordinate updates per chain.
    pub acceptance: Vec<f64>,
    pub config: SamplerConfig,
}

impl MetaPosterior {
    pub fn chain(&self, c: usize) -> &[MetaParams] {
        &self.draws[c * self.draws_per_chain..(c + 1) * self.draws_per_chain]
    }

    /// One scalar per draw, split by chain.
    pub fn scalar_chains(&self, f: impl Fn(&MetaParams) -> f64) -> Vec<Vec<f64>> {
        (0..self.chains).map(|c| self.chain(c).iter().map(&f).collect()).collect()
    }

    pub fn max_rhat(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.rhat).fold(1.0, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.ess).fold(f64::INFINITY, f64::min)
    }
}

/// Flat coordinate layout: `alpha (S*J), a (J), mu (J), ln sigma (J),
/// ln sigma_a, ln tau_ar, psi`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    s: usize,
    j: usize,
}

impl Layout {
    fn alpha(&self, s: usize, k: usize) -> usize {
        s * self.j + k
    }
    fn a(&self, k: usize) -> usize {
        self.s * self.j + k
    }
    fn mu(&self, k: usize) -> usize {
        self.s * self.j + self.j + k
    }
    fn ln_sigma(&self, k: usize) -> usize {
        self.s * self.j + 2 * self.j + k
    }
    fn ln_sigma_a(&self) -> usize {
        self.s * self.j + 3 * self.j
    }
    fn ln_tau(&self) -> usize {
        self.ln_sigma_a() + 1
    }
    fn psi(&self) -> usize {
        self.ln_sigma_a() + 2
    }
    fn len(&self) -> usize {
        self.ln_sigma_a() + 3
    }

    fn pack(&self, p: &MetaParams) -> Vec<f64> {
        let mut th = vec![0.0; self.len()];
        for s in 0..self.s {
            for k in 0..self.j {
                th[self.alpha(s, k)] = p.alpha[s][k];
            }
        }
        for k in 0..self.j {
            th[self.a(k)] = p.a[k];
            th[self.mu(k)] = p.mu[k];
            th[self.ln_sigma(k)] = p.sigma[k].ln();
        }
        th[self.ln_sigma_a()] = p.sigma_a.ln();
        th[self.ln_tau()] = p.tau_ar.ln();
        th[self.psi()] = p.psi;
        th
    }

    fn unpack(&self, th: &[f64]) -> MetaParams {
        MetaParams {
            alpha: (0..self.s)
                .map(|s| (0..self.j).map(|k| th[self.alpha(s, k)]).collect())
                .collect(),
            a: (0..self.j).map(|k| th[self.a(k)]).collect(),
            mu: (0..self.j).map(|k| th[self.mu(k)]).collect(),
            sigma: (0..self.j).map(|k| th[self.ln_sigma(k)].exp()).collect(),
            sigma_a: th[self.ln_sigma_a()].exp(),
            tau_ar: th[self.ln_tau()].exp(),
            psi: th[self.psi()],
        }
    }
}

struct Target<'a> {
    lay: Layout,
    stats: &'a StudySufficientStats,
    model: Model,
}

impl Target<'_> {
    /// Log density in unconstrained coordinates, including the log-Jacobian
    /// of every log-SD transform.
    fn log_density(&self, th: &[f64]) -> f64 {
        let l = self.lay;
        let mut lp = 0.0;
        for s in 0..l.s {
            for k in 0..l.j {
                let x = th[l.alpha(s, k)];
                lp += self.stats.d[s][k] as f64 * x - x.exp() * self.stats.e[s][k];
            }
        }
        let pr = match self.model {
            Model::VagueConjugate => return lp,
            Model::Hierarchical(p) => p,
        };
        lp += self.hierarchy(th, &pr);
        lp
    }

    fn hierarchy(&self, th: &[f64], pr: &Priors) -> f64 {
        let l = self.lay;
        let mut lp = 0.0;
        for k in 0..l.j {
            let ls = th[l.ln_sigma(k)];
            let sig = ls.exp();
            for s in 0..l.s {
                lp += normal_lpdf(th[l.alpha(s, k)], th[l.a(k)], sig);
            }
            lp += half_normal_lpdf(sig, pr.sigma_scale) + ls;
        }
        let lsa = th[l.ln_sigma_a()];
        let sa = lsa.exp();
        for k in 0..l.j {
            lp += normal_lpdf(th[l.a(k)], th[l.mu(k)], sa);
        }
        lp += half_normal_lpdf(sa, pr.sigma_a_scale) + lsa;
        let lt = th[l.ln_tau()];
        let tau = lt.exp();
        let phi = th[l.psi()].tanh();
        for k in 0..l.j {
            let m = th[l.mu(k)];
            lp += if k == 0 {
                normal_lpdf(m, 0.0, tau / (1.0 - phi * phi).sqrt())
            } else {
                normal_lpdf(m, phi * th[l.mu(k - 1)], tau)
            };
        }
        lp += half_normal_lpdf(tau, pr.tau_scale) + lt;
        lp += normal_lpdf(th[l.psi()], 0.0, pr.psi_sd);
        lp
    }
}

/// A proposal kind with its own adapted step size.
#[derive(Debug, Clone, Copy)]
enum Move {
    Coord(usize),
    /// Scale `sigma_j` and the study deviations around `a_j` together.
    ScaleSigma(usize),
    /// Shift `alpha_.j`, `a_j` and `mu_j` by one amount.
    Shift(usize),
    /// Scale `sigma_a` and the deviations of `a` from `mu`.
    ScaleSigmaA,
    /// Scale `tau` and the AR path `mu`, carrying `a` and `alpha` along.
    ScaleTau,
}

struct Adaptive {
    mv: Move,
    log_step: f64,
    accepted: usize,
    tried: usize,
}

/// Returns the proposal and its log-Jacobian.
fn propose(lay: Layout, th: &[f64], mv: Move, eps: f64) -> (Vec<f64>, f64) {
    let mut p = th.to_vec();
    let jac = match mv {
        Move::Coord(i) => {
            p[i] += eps;
            0.0
        }
        Move::ScaleSigma(k) => {
            p[lay.ln_sigma(k)] += eps;
            let f = eps.exp();
            for s in 0..lay.s {
                let i = lay.alpha(s, k);
                p[i] = th[lay.a(k)] + (th[i] - th[lay.a(k)]) * f;
            }
            lay.s as f64 * eps
        }
        Move::Shift(k) => {
            for s in 0..lay.s {
                p[lay.alpha(s, k)] += eps;
            }
            p[lay.a(k)] += eps;
            p[lay.mu(k)] += eps;
            0.0
        }
        Move::ScaleSigmaA => {
            p[lay.ln_sigma_a()] += eps;
            let f = eps.exp();
            for k in 0..lay.j {
                let new_a = th[lay.mu(k)] + (th[lay.a(k)] - th[lay.mu(k)]) * f;
                let da = new_a - th[lay.a(k)];
                p[lay.a(k)] = new_a;
                for s in 0..lay.s {
                    p[lay.alpha(s, k)] += da;
                }
            }
            lay.j as f64 * eps
        }
        Move::ScaleTau => {
            p[lay.ln_tau()] += eps;
            let f = eps.exp();
            for k in 0..lay.j {
                let dm = th[lay.mu(k)] * (f - 1.0);
                p[lay.mu(k)] += dm;
                p[lay.a(k)] += dm;
                for s in 0..lay.s {
                    p[lay.alpha(s, k)] += dm;
                }
            }
            lay.j as f64 * eps
        }
    };
    (p, jac)
}

fn moves(lay: Layout, model: Model) -> Vec<Move> {
    let mut v: Vec<Move> = (0..lay.s * lay.j).map(Move::Coord).collect();
    if let Model::Hierarchical(_) = model {
        v.extend((lay.s * lay.j..lay.len()).map(Move::Coord));
        v.extend((0..lay.j).map(Move::ScaleSigma));
        v.extend((0..lay.j).map(Move::Shift));
        v.push(Move::ScaleSigmaA);
        v.push(Move::ScaleTau);
    }
    v
}

struct ChainOut {
    draws: Vec<MetaParams>,
    acceptance: f64,
}

fn run_chain(target: &Target, init: &MetaParams, cfg: &SamplerConfig, chain: usize) -> Result<ChainOut, MetaError> {
    let lay = target.lay;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let mut th = lay.pack(init);
    let active = match cfg.model {
        Model::Hierarchical(_) => lay.len(),
        Model::VagueConjugate => lay.s * lay.j,
    };
    for x in th.iter_mut().take(active) {
        let z: f64 = rng.sample(StandardNormal);
        *x += INIT_JITTER * z;
    }
    let mut lp = target.log_density(&th);
    if !lp.is_finite() {
        return Err(MetaError::SamplerFailure {
            chain,
            iteration: 0,
            message: format!("initial log density {lp}"),
        });
    }
    let mut adapt: Vec<Adaptive> = moves(lay, cfg.model)
        .into_iter()
        .map(|mv| Adaptive {
            mv,
            log_step: (0.5f64).ln(),
            accepted: 0,
            tried: 0,
        })
        .collect();
    let mut draws = Vec::with_capacity(cfg.draws);
    let (mut acc_post, mut tried_post) = (0usize, 0usize);
    for it in 0..cfg.warmup + cfg.draws {
        let warm = it < cfg.warmup;
        let gain = 1.0 / ((it + 1) as f64).powf(0.6);
        for ad in adapt.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            let (prop, jac) = propose(lay, &th, ad.mv, ad.log_step.exp() * z);
            let lp_new = target.log_density(&prop);
            let log_r = lp_new - lp + jac;
            let u: f64 = rng.random();
            let ok = lp_new.is_finite() && u.ln() < log_r;
            if ok {
                th = prop;
                lp = lp_new;
            }
            if warm {
                ad.log_step += gain * (ok as u8 as f64 - TARGET_ACCEPT);
            } else if let Move::Coord(_) = ad.mv {
                tried_post += 1;
                acc_post += ok as usize;
            }
            ad.tried += 1;
            ad.accepted += ok as usize;
        }
        if !lp.is_finite() || th.iter().any(|x| !x.is_finite()) {
            return Err(MetaError::SamplerFailure {
                chain,
                iteration: it,
                message: format!("state left the finite domain (log density {lp})"),
            });
        }
        if !warm {
            draws.push(lay.unpack(&th));
        }
    }
    Ok(ChainOut {
        draws,
        acceptance: acc_post as f64 / tried_post.max(1) as f64,
    })
}

fn scalar_names(lay: Layout, model: Model) -> Vec<(String, Box<dyn Fn(&MetaParams) -> f64 + Sync>)> {
    let mut out: Vec<(String, Box<dyn Fn(&MetaParams) -> f64 + Sync>)> = Vec::new();
    for s in 0..lay.s {
        for k in 0..lay.j {
            out.push((format!("alpha[{s},{k}]"), Box::new(move |p: &MetaParams| p.alpha[s][k])));
        }
    }
    if let Model::Hierarchical(_) = model {
        for k in 0..lay.j {
            out.push((format!("a[{k}]"), Box::new(move |p: &MetaParams| p.a[k])));
            out.push((format!("mu[{k}]"), Box::new(move |p: &MetaParams| p.mu[k])));
            out.push((format!("sigma[{k}]"), Box::new(move |p: &MetaParams| p.sigma[k])));
        }
        out.push(("sigma_a".into(), Box::new(|p: &MetaParams| p.sigma_a)));
        out.push(("tau_ar".into(), Box::new(|p: &MetaParams| p.tau_ar)));
        out.push(("psi".into(), Box::new(|p: &MetaParams| p.psi)));
    }
    out
}

/// Runs `config.chains` independent chains (in parallel) and summarizes
/// split R-hat and ESS for every sampled scalar.
pub fn sample_posterior(
    stats: &StudySufficientStats,
    grid: &IntervalGrid,
    config: &SamplerConfig,
) -> Result<MetaPosterior, MetaError> {
    stats.validate()?;
    if stats.intervals() != grid.len() {
        return Err(MetaError::Shape(format!(
            "stats have {} intervals, grid has {}",
            stats.intervals(),
            grid.len()
        )));
    }
    if config.chains == 0 || config.draws == 0 {
        return Err(MetaError::EmptyPosterior);
    }
    let lay = Layout {
        s: stats.studies(),
        j: stats.intervals(),
    };
    let priors = match config.model {
        Model::Hierarchical(p) => p,
        Model::VagueConjugate => Priors::default(),
    };
    let init = MetaParams::initial(stats, &priors);
    let target = Target {
        lay,
        stats,
        model: config.model,
    };
    let outs: Vec<ChainOut> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&target, &init, config, c))
        .collect::<Result<_, _>>()?;
    let acceptance = outs.iter().map(|o| o.acceptance).collect();
    let draws: Vec<MetaParams> = outs.into_iter().flat_map(|o| o.draws).collect();
    let mut post = MetaPosterior {
        draws,
        chains: config.chains,
        draws_per_chain: config.draws,
        diagnostics: Vec::new(),
        acceptance,
        config: *config,
    };
    post.diagnostics = scalar_names(lay, config.model)
        .into_iter()
        .map(|(name, f)| {
            let chains = post.scalar_chains(&f);
            let all: Vec<f64> = chains.iter().flatten().copied().collect();
            let mean = all.iter().sum::<f64>() / all.len() as f64;
            let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (all.len().max(2) - 1) as f64;
            ScalarDiagnostic {
                name,
                mean,
                sd: var.sqrt(),
                rhat: split_rhat(&chains),
                ess: ess(&chains),
            }
        })
        .collect();
    Ok(post)
}

/// Log density of `params` exactly as the sampler sees it (unconstrained
/// coordinates with log-SD Jacobians).
pub fn unconstrained_log_density(params: &MetaParams, stats: &StudySufficientStats, model: Model) -> f64 {
    let lay = Layout {
        s: stats.studies(),
        j: stats.intervals(),
    };
    Target { lay, stats, model }.log_density(&lay.pack(params))
}
