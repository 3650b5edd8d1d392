//! CSV and JSON writers for posterior draws and summaries.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::intervals::IntervalGrid;
use crate::sampler::{MetaPosterior, SamplerConfig, ScalarDiagnostic};
use crate::summary::{PooledMedian, RmstSummary, SurvivalBand};
use crate::MetaError;

/// One row per draw: chain, iteration, then every scalar parameter.
pub fn write_draws_csv<W: Write>(posterior: &MetaPosterior, out: W) -> Result<(), MetaError> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = posterior.draws.first() else {
        return Err(MetaError::EmptyPosterior);
    };
    let (s, j) = (first.alpha.len(), first.a.len());
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    for si in 0..s {
        header.extend((0..j).map(|k| format!("alpha[{si}][{k}]")));
    }
    header.extend((0..j).map(|k| format!("a[{k}]")));
    header.extend((0..j).map(|k| format!("mu[{k}]")));
    header.extend((0..j).map(|k| format!("sigma[{k}]")));
    header.extend(["sigma_a", "tau_ar", "phi"].map(String::from));
    w.write_record(&header)?;
    for (i, d) in posterior.draws.iter().enumerate() {
        let mut row = vec![(i / posterior.draws_per_chain).to_string(), (i % posterior.draws_per_chain).to_string()];
        let vals = d
            .alpha
            .iter()
            .flatten()
            .chain(&d.a)
            .chain(&d.mu)
            .chain(&d.sigma)
            .copied()
            .chain([d.sigma_a, d.tau_ar, d.phi()]);
        row.extend(vals.map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bands_csv<W: Write>(bands: &[SurvivalBand], out: W) -> Result<(), MetaError> {
    let mut w = csv::Writer::from_writer(out);
    for b in bands {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MetaSummary {
    pub studies: usize,
    pub cuts: Vec<f64>,
    pub pooled_median: PooledMedian,
    pub rmst: Vec<RmstSummary>,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub acceptance: Vec<f64>,
    pub diagnostics: Vec<ScalarDiagnostic>,
    pub config: SamplerConfig,
}

impl MetaSummary {
    pub fn new(
        posterior: &MetaPosterior,
        grid: &IntervalGrid,
        pooled_median: PooledMedian,
        rmst: Vec<RmstSummary>,
    ) -> Self {
        Self {
            studies: posterior.draws.first().map_or(0, |d| d.alpha.len()),
            cuts: grid.cuts().to_vec(),
            pooled_median,
            rmst,
            max_rhat: posterior.max_rhat(),
            min_ess: posterior.min_ess(),
            acceptance: posterior.acceptance.clone(),
            diagnostics: posterior.diagnostics.clone(),
            config: posterior.config,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), MetaError> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}
