//! Synthetic survival cohorts, Kaplan-Meier plot rendering with risk tables,
//! and curve-fidelity metrics over the 27-cell parameter grid.

pub mod cohort;
pub mod grid;
pub mod metrics;
pub mod render;

pub use cohort::{generate_ipd, sample_config, GridCell, Level, SynthConfig};
pub use grid::{make_fixture, run_grid, CellSummary, Fixture, GridSummary, RunOutcome, RunRecord};
pub use metrics::{score, MetricsReport, MosAe, AE_GRID_POINTS};
pub use render::{count_at_risk, render_km_plot, RenderStyle, RenderedPlot};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("unknown grid cell {0:?}; expected three of L/M/H")]
    BadCell(String),
    #[error("invalid synthetic config {0}")]
    BadConfig(String),
    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),
    #[error("at least one group is required")]
    NoGroups,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
