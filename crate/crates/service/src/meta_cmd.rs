//! `kmgpt meta`: pools IPD files (one per study), fitting every stratum of
//! the group column as its own model.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use kmgpt_core::recon::IpdRecord;
use kmgpt_meta::{
    bin_ipd, estimate_pooled_median, pooled_survival, rmst, sample_posterior, write_bands_csv, write_draws_csv,
    IntervalGrid, MetaSummary, SamplerConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub enum IntervalSpec {
    Auto(usize),
    /// Interior and final cut points; 0 is prepended.
    Cuts(Vec<f64>),
}

impl std::str::FromStr for IntervalSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim() == "auto" {
            return Ok(Self::Auto(kmgpt_meta::intervals::DEFAULT_INTERVALS));
        }
        s.split(',')
            .map(|c| c.trim().parse::<f64>().map_err(|_| format!("bad cut point {c:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::Cuts)
    }
}

#[derive(Debug, Clone)]
pub struct MetaOptions {
    pub ipd: Vec<PathBuf>,
    pub group_col: String,
    pub intervals: IntervalSpec,
    pub sampler: SamplerConfig,
    /// RMST horizons; empty means the grid end.
    pub rmst: Vec<f64>,
    /// Points in the survival-band CSV.
    pub band_points: usize,
    pub out: PathBuf,
}

/// Reads `time`, `status` and the group column; a file without that
/// column is one stratum named `all`.
pub fn read_study(path: &Path, group_col: &str) -> anyhow::Result<Vec<IpdRecord>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ti), Some(si)) = (col("time"), col("status")) else {
        bail!("{}: needs time and status columns", path.display());
    };
    let gi = col(group_col);
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let time: f64 = rec[ti].trim().parse().with_context(|| format!("{} row {}: time", path.display(), row + 1))?;
        if !(time.is_finite() && time >= 0.0) {
            bail!("{} row {}: time {time} out of range", path.display(), row + 1);
        }
        let status = match rec[si].trim() {
            "0" => 0,
            "1" => 1,
            s => bail!("{} row {}: status {s:?}", path.display(), row + 1),
        };
        let group = gi.map_or("all", |g| rec[g].trim());
        out.push(IpdRecord::new(time, status, group));
    }
    Ok(out)
}

fn dir_name(stratum: &str) -> String {
    stratum
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Fits each stratum and writes `draws.csv`, `bands.csv` and `summary.json`
/// under `out/<stratum>/`.
pub fn run_meta(opts: &MetaOptions) -> anyhow::Result<BTreeMap<String, MetaSummary>> {
    if opts.ipd.is_empty() {
        bail!("no IPD files given");
    }
    let studies: Vec<Vec<IpdRecord>> = opts
        .ipd
        .iter()
        .map(|p| read_study(p, &opts.group_col))
        .collect::<anyhow::Result<_>>()?;
    let mut strata: BTreeMap<String, Vec<Vec<IpdRecord>>> = BTreeMap::new();
    for study in &studies {
        let mut by_group: BTreeMap<&str, Vec<IpdRecord>> = BTreeMap::new();
        for r in study {
            by_group.entry(r.group.as_str()).or_default().push(r.clone());
        }
        for (g, recs) in by_group {
            strata.entry(g.to_string()).or_default().push(recs);
        }
    }
    let mut results = BTreeMap::new();
    for (name, studies) in strata {
        let grid = match &opts.intervals {
            IntervalSpec::Auto(j) => IntervalGrid::auto(&studies, *j)?,
            IntervalSpec::Cuts(c) => IntervalGrid::new(std::iter::once(0.0).chain(c.iter().copied()).collect())?,
        };
        let stats = bin_ipd(&studies, &grid)?;
        tracing::info!(stratum = %name, studies = studies.len(), intervals = grid.len(), "sampling");
        let post = sample_posterior(&stats, &grid, &opts.sampler)?;
        let horizons = if opts.rmst.is_empty() { vec![grid.end()] } else { opts.rmst.clone() };
        let rmsts = horizons
            .iter()
            .map(|&h| rmst(&post, &grid, h))
            .collect::<Result<Vec<_>, _>>()?;
        let n = opts.band_points.max(2);
        let times: Vec<f64> = (0..n).map(|i| grid.end() * i as f64 / (n - 1) as f64).collect();
        let bands = pooled_survival(&post, &grid, &times)?;
        let dir = opts.out.join(dir_name(&name));
        fs::create_dir_all(&dir)?;
        write_draws_csv(&post, fs::File::create(dir.join("draws.csv"))?)?;
        write_bands_csv(&bands, fs::File::create(dir.join("bands.csv"))?)?;
        let summary = MetaSummary::new(&post, &grid, estimate_pooled_median(&post, &grid), rmsts);
        summary.write_json(&dir.join("summary.json"))?;
        results.insert(name, summary);
    }
    Ok(results)
}
