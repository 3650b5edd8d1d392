//! Bayesian hierarchical piecewise-exponential pooling of multi-study IPD:
//! binning, posterior sampling, pooled survival bands, RMST and medians.

pub mod diagnostics;
pub mod intervals;
pub mod model;
pub mod output;
pub mod sampler;
pub mod simulate;
pub mod summary;

pub use diagnostics::{ess, split_rhat};
pub use intervals::{bin_ipd, IntervalGrid, StudySufficientStats};
pub use output::{write_bands_csv, write_draws_csv, MetaSummary};
pub use model::{log_posterior, MetaParams, Model, Priors};
pub use sampler::{sample_posterior, MetaPosterior, SamplerConfig, ScalarDiagnostic};
pub use simulate::{reference_fixture, simulate_piecewise, true_survival, ReferenceFixture};
pub use summary::{
    estimate_pooled_median, pooled_survival, rmst, study_survival, PooledMedian, RmstSummary, SurvivalBand,
};

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error("time {time} lies beyond the interval grid end {end}")]
    GridTooShort { time: f64, end: f64 },
    #[error("invalid interval grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("chain {chain} diverged at iteration {iteration}: {message}")]
    SamplerFailure {
        chain: usize,
        iteration: usize,
        message: String,
    },
    #[error("posterior has no draws")]
    EmptyPosterior,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
