//! Filesystem job store: one directory per job holding `job.json` and the
//! stage artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use kmgpt_core::prep::EditList;
use kmgpt_core::raster::RasterImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::pipeline::{run_pipeline, PipelineConfig, Stage, StageSink, EDITS_JSON, INPUT_PNG};

const JOB_FILE: &str = "job.json";
const RUN_LOCK: &str = "run.lock";

#[derive(Debug, Error)]
pub enum JobError {
    #[error("job {0} not found")]
    NotFound(String),
    #[error("job {id} is {state}; {action} is not allowed")]
    Conflict { id: String, state: Stage, action: &'static str },
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("job store: {0}")]
    Io(#[from] std::io::Error),
    #[error("job record: {0}")]
    Record(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub state: Stage,
    /// Artifact file names per completed stage.
    pub stage_paths: BTreeMap<Stage, Vec<String>>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl Job {
    /// Forward-only transitions, or to `Failed`.
    pub fn advance(&mut self, to: Stage) -> Result<(), JobError> {
        if self.state == Stage::Failed || (to != Stage::Failed && to <= self.state) {
            return Err(JobError::Conflict {
                id: self.id.clone(),
                state: self.state,
                action: "moving backwards",
            });
        }
        self.state = to;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JobStore {
    root: PathBuf,
}

impl JobStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, JobError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Only canonical UUIDs name jobs, which also keeps paths inside the root.
    fn dir(&self, id: &str) -> Result<PathBuf, JobError> {
        let parsed = Uuid::parse_str(id).map_err(|_| JobError::NotFound(id.to_string()))?;
        if parsed.hyphenated().to_string() != id {
            return Err(JobError::NotFound(id.to_string()));
        }
        let dir = self.root.join(id);
        if !dir.join(JOB_FILE).is_file() {
            return Err(JobError::NotFound(id.to_string()));
        }
        Ok(dir)
    }

    fn save(&self, job: &Job) -> Result<(), JobError> {
        let dir = self.root.join(&job.id);
        let tmp = dir.join("job.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(job)?)?;
        fs::rename(tmp, dir.join(JOB_FILE))?;
        Ok(())
    }

    /// Stores the upload as `00_input.png` (re-encoded when it is a JPEG).
    pub fn create(&self, image_bytes: &[u8]) -> Result<Job, JobError> {
        let image = RasterImage::decode(image_bytes).map_err(|e| JobError::BadRequest(format!("unreadable image: {e}")))?;
        let png = image.encode_png().map_err(|e| JobError::BadRequest(e.to_string()))?;
        let id = Uuid::new_v4().hyphenated().to_string();
        let dir = self.root.join(&id);
        fs::create_dir(&dir)?;
        fs::write(dir.join(INPUT_PNG), png)?;
        let job = Job {
            id,
            state: Stage::Created,
            stage_paths: BTreeMap::from([(Stage::Created, vec![INPUT_PNG.to_string()])]),
            error: None,
            created_at: Utc::now(),
        };
        self.save(&job)?;
        Ok(job)
    }

    pub fn get(&self, id: &str) -> Result<Job, JobError> {
        let dir = self.dir(id)?;
        Ok(serde_json::from_slice(&fs::read(dir.join(JOB_FILE))?)?)
    }

    /// Path of a finished artifact, if the job has produced it.
    pub fn artifact(&self, id: &str, name: &str) -> Result<PathBuf, JobError> {
        let job = self.get(id)?;
        if !job.stage_paths.values().flatten().any(|n| n == name) {
            return Err(JobError::NotFound(format!("{id}/{name}")));
        }
        Ok(self.dir(id)?.join(name))
    }

    /// Edits may be set once, before the job runs.
    pub fn set_edits(&self, id: &str, edits: &EditList) -> Result<Job, JobError> {
        let dir = self.dir(id)?;
        let mut job = self.get(id)?;
        if job.state != Stage::Created || dir.join(RUN_LOCK).exists() || dir.join(EDITS_JSON).exists() {
            return Err(JobError::Conflict {
                id: id.to_string(),
                state: job.state,
                action: "editing",
            });
        }
        fs::write(dir.join(EDITS_JSON), edits.to_json())?;
        job.stage_paths.entry(Stage::Created).or_default().push(EDITS_JSON.to_string());
        self.save(&job)?;
        Ok(job)
    }

    /// Claims the job for a single run; a second claim is a conflict.
    pub fn claim(&self, id: &str) -> Result<(), JobError> {
        let dir = self.dir(id)?;
        let job = self.get(id)?;
        match fs::OpenOptions::new().write(true).create_new(true).open(dir.join(RUN_LOCK)) {
            Ok(_) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(JobError::Conflict {
                id: id.to_string(),
                state: job.state,
                action: "running again",
            }),
            Err(e) => Err(e.into()),
        }
    }

    /// Runs a claimed job to completion or failure; the job record is updated
    /// after every stage.
    pub fn run(&self, id: &str, config: &PipelineConfig, api_key: Option<String>) -> Result<Job, JobError> {
        let dir = self.dir(id)?;
        let mut job = self.get(id)?;
        let outcome = (|| -> Result<(), String> {
            let image = RasterImage::load(dir.join(INPUT_PNG)).map_err(|e| e.to_string())?;
            let edits = match fs::read_to_string(dir.join(EDITS_JSON)) {
                Ok(text) => EditList::from_json(&text).map_err(|e| e.to_string())?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    let empty = EditList::default();
                    fs::write(dir.join(EDITS_JSON), empty.to_json()).map_err(|e| e.to_string())?;
                    job.stage_paths.entry(Stage::Created).or_default().push(EDITS_JSON.to_string());
                    empty
                }
                Err(e) => return Err(e.to_string()),
            };
            let provider = config.build_provider(api_key)?;
            let mut sink = JobSink {
                store: self,
                dir: &dir,
                job: &mut job,
            };
            run_pipeline(&image, &edits, provider.as_ref(), config, &mut sink)
                .map(|_| ())
                .map_err(|e| e.to_string())
        })();
        if let Err(message) = outcome {
            tracing::info!(job = id, %message, "job failed");
            job.error = Some(message);
            job.advance(Stage::Failed)?;
            // a rejected input keeps its findings
            let v = crate::pipeline::VALIDATION_JSON;
            if dir.join(v).is_file() && !job.stage_paths.values().flatten().any(|n| n == v) {
                job.stage_paths.insert(Stage::Failed, vec![v.to_string()]);
            }
            self.save(&job)?;
        }
        Ok(job)
    }
}

struct JobSink<'a> {
    store: &'a JobStore,
    dir: &'a Path,
    job: &'a mut Job,
}

impl StageSink for JobSink<'_> {
    /// Never overwrites: job directories are append-only.
    fn artifact(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        use std::io::Write;
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(self.dir.join(name))?
            .write_all(bytes)
    }

    fn reached(&mut self, stage: Stage, artifacts: &[&str]) -> std::io::Result<()> {
        self.job
            .advance(stage)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        self.job
            .stage_paths
            .insert(stage, artifacts.iter().map(|s| s.to_string()).collect());
        self.store.save(self.job).map_err(|e| std::io::Error::other(e.to_string()))
    }
}
