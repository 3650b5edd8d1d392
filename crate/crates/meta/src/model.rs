//! Model parameters, priors and the log-posterior density.

use serde::{Deserialize, Serialize};

use crate::intervals::StudySufficientStats;
use crate::MetaError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Half-normal prior scales and the `psi` prior SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub sigma_scale: f64,
    pub sigma_a_scale: f64,
    pub tau_scale: f64,
    pub psi_sd: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            sigma_scale: 0.2,
            sigma_a_scale: 0.2,
            tau_scale: 1.0,
            psi_sd: 0.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// The full hierarchy: study log-hazards around pooled log-hazards around
    /// an AR(1) mean process.
    Hierarchical(Priors),
    /// Flat prior on each study log-hazard and nothing else sampled; the
    /// hazard posterior is then exactly `Gamma(d, E)`.
    VagueConjugate,
}

impl Default for Model {
    fn default() -> Self {
        Model::Hierarchical(Priors::default())
    }
}

/// One point in parameter space. `phi = tanh(psi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaParams {
    /// `alpha[s][j]`: study log-hazards.
    pub alpha: Vec<Vec<f64>>,
    /// Pooled log-hazards.
    pub a: Vec<f64>,
    /// Latent AR(1) means.
    pub mu: Vec<f64>,
    /// Between-study SD per interval.
    pub sigma: Vec<f64>,
    pub sigma_a: f64,
    pub tau_ar: f64,
    pub psi: f64,
}

impl MetaParams {
    pub fn phi(&self) -> f64 {
        self.psi.tanh()
    }

    /// Starting point: smoothed raw log-rates, their study mean, prior-median
    /// SDs and `psi = 0`.
    pub fn initial(stats: &StudySufficientStats, priors: &Priors) -> Self {
        let j = stats.intervals();
        let alpha: Vec<Vec<f64>> = stats
            .d
            .iter()
            .zip(&stats.e)
            .map(|(d, e)| d.iter().zip(e).map(|(&dk, &ek)| ((dk as f64 + 0.5) / (ek + 1.0)).ln()).collect())
            .collect();
        let a: Vec<f64> = (0..j)
            .map(|k| alpha.iter().map(|row| row[k]).sum::<f64>() / alpha.len() as f64)
            .collect();
        // half-normal median = scale * 0.6745
        let hn_median = 0.674_489_750_196_081_7;
        Self {
            mu: a.clone(),
            a,
            alpha,
            sigma: vec![priors.sigma_scale * hn_median; j],
            sigma_a: priors.sigma_a_scale * hn_median,
            tau_ar: priors.tau_scale * hn_median,
            psi: 0.0,
        }
    }

    pub fn check(&self, stats: &StudySufficientStats) -> Result<(), MetaError> {
        let j = stats.intervals();
        if self.alpha.len() != stats.studies()
            || self.alpha.iter().any(|r| r.len() != j)
            || self.a.len() != j
            || self.mu.len() != j
            || self.sigma.len() != j
        {
            return Err(MetaError::Shape("parameters do not match the data dimensions".into()));
        }
        let scalars = self
            .alpha
            .iter()
            .flatten()
            .chain(&self.a)
            .chain(&self.mu)
            .chain(&self.sigma)
            .chain([&self.sigma_a, &self.tau_ar, &self.psi]);
        if scalars.clone().any(|v| !v.is_finite()) {
            return Err(MetaError::NonFinite("parameter value".into()));
        }
        if self.sigma.iter().chain([&self.sigma_a, &self.tau_ar]).any(|&s| s <= 0.0) {
            return Err(MetaError::NonFinite("standard deviations must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

pub(crate) fn half_normal_lpdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    std::f64::consts::LN_2 - 0.5 * LN_2PI - scale.ln() - 0.5 * z * z
}

/// Piecewise-exponential log-likelihood `sum d*alpha - exp(alpha)*E`.
pub(crate) fn log_likelihood(alpha: &[Vec<f64>], stats: &StudySufficientStats) -> f64 {
    alpha
        .iter()
        .zip(stats.d.iter().zip(&stats.e))
        .map(|(al, (d, e))| {
            al.iter()
                .zip(d.iter().zip(e))
                .map(|(&x, (&dk, &ek))| dk as f64 * x - x.exp() * ek)
                .sum::<f64>()
        })
        .sum()
}

/// Hierarchy and hyperprior terms, without the likelihood.
pub(crate) fn log_prior(p: &MetaParams, pr: &Priors) -> f64 {
    let mut lp = 0.0;
    for row in &p.alpha {
        for (k, &x) in row.iter().enumerate() {
            lp += normal_lpdf(x, p.a[k], p.sigma[k]);
        }
    }
    for (k, &ak) in p.a.iter().enumerate() {
        lp += normal_lpdf(ak, p.mu[k], p.sigma_a);
    }
    let phi = p.phi();
    for (k, &m) in p.mu.iter().enumerate() {
        lp += if k == 0 {
            normal_lpdf(m, 0.0, p.tau_ar / (1.0 - phi * phi).sqrt())
        } else {
            normal_lpdf(m, phi * p.mu[k - 1], p.tau_ar)
        };
    }
    lp += p.sigma.iter().map(|&s| half_normal_lpdf(s, pr.sigma_scale)).sum::<f64>();
    lp += half_normal_lpdf(p.sigma_a, pr.sigma_a_scale);
    lp += half_normal_lpdf(p.tau_ar, pr.tau_scale);
    lp += normal_lpdf(p.psi, 0.0, pr.psi_sd);
    lp
}

/// Log posterior density (up to a constant) of `params` on their natural
/// scale: likelihood plus every hierarchy and prior term.
pub fn log_posterior(params: &MetaParams, stats: &StudySufficientStats, priors: &Priors) -> Result<f64, MetaError> {
    stats.validate()?;
    params.check(stats)?;
    let lp = log_likelihood(&params.alpha, stats) + log_prior(params, priors);
    if lp.is_finite() {
        Ok(lp)
    } else {
        Err(MetaError::NonFinite(format!("log posterior {lp}")))
    }
}
