//! Pipeline orchestration with persisted stage artifacts, a filesystem job
//! store, the HTTP API and the command implementations behind `kmgpt`.

pub mod api;
pub mod bench;
pub mod jobs;
pub mod meta_cmd;
pub mod pipeline;

pub use api::{router, serve, AppState};
pub use jobs::{Job, JobError, JobStore};
pub use pipeline::{run_pipeline, run_to_dir, PipelineConfig, PipelineError, PipelineOutput, ProviderKind, Stage};
