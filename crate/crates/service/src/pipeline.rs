//! The end-to-end run: edits, enhancement, input gate, metadata, curve
//! extraction, reconstruction and the overlay check, persisting each stage.

use std::fmt;
use std::path::{Path, PathBuf};

use kmgpt_core::curves::{extract_curves, CurveTrace, ExtractParams};
use kmgpt_core::geometry::{detect_ranges, locate_axes, Axis, AxisGeometry, Calibration};
use kmgpt_core::mmpu::{
    extract_metadata, match_groups, read_ticks, validate_input, AxisReconciliation, Component, GlyphOcrEngine, Issue,
    LiveConfig, LiveProvider, MetadataProvider, PlotMetadata, ScriptedProvider, SidecarFile, SidecarProvider,
    TickReading, ValidationReport,
};
use kmgpt_core::prep::{apply_edits, enhance, EditList, RegionKind};
use kmgpt_core::raster::{hex_color, RasterImage, Rgb};
use kmgpt_core::recon::{
    km_estimate, overlay_check_with, reconstruct_ipd, write_ipd_csv, DigitizedCurve, IpdRecord, OverlayReport,
    ReconDiagnostics, Reconstruction, OVERLAY_TOLERANCE,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INPUT_PNG: &str = "00_input.png";
pub const EDITS_JSON: &str = "05_edits.json";
pub const PREPPED_PNG: &str = "10_prepped.png";
pub const VALIDATION_JSON: &str = "15_validation.json";
pub const METADATA_JSON: &str = "20_metadata.json";
pub const TRACES_JSON: &str = "30_traces.json";
pub const IPD_CSV: &str = "40_ipd.csv";
pub const OVERLAY_PNG: &str = "50_overlay.png";
pub const REPORT_JSON: &str = "60_report.json";

const OVERLAY_GREEN: Rgb = [0, 170, 0];

/// Job states in pipeline order; `Failed` is reachable from any of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Created,
    Validated,
    Prepared,
    Extracted,
    Reconstructed,
    Failed,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Created => "created",
            Stage::Validated => "validated",
            Stage::Prepared => "prepared",
            Stage::Extracted => "extracted",
            Stage::Reconstructed => "reconstructed",
            Stage::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    /// The stage that could not be completed.
    pub stage: Stage,
    pub message: String,
    /// Input-gate findings when the failure is a rejected input.
    pub issues: Vec<Issue>,
}

impl PipelineError {
    fn new(stage: Stage, e: impl fmt::Display) -> Self {
        Self {
            stage,
            message: e.to_string(),
            issues: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    Sidecar,
    Scripted,
}

/// Run settings. Never holds an API key; that travels separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub provider: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar_path: Option<PathBuf>,
    /// Sidecar content supplied directly instead of by path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<SidecarFile>,
    /// Replies for the scripted provider, in request order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub overlay_tolerance: f64,
    /// Continue past a failed input gate.
    #[serde(default)]
    pub force: bool,
}

fn default_tolerance() -> f64 {
    OVERLAY_TOLERANCE
}

impl PipelineConfig {
    pub fn sidecar(path: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            provider: ProviderKind::Sidecar,
            sidecar_path: Some(path.into()),
            sidecar: None,
            script: vec![],
            endpoint: None,
            model: None,
            seed,
            overlay_tolerance: OVERLAY_TOLERANCE,
            force: false,
        }
    }

    pub fn inline_sidecar(file: SidecarFile, seed: u64) -> Self {
        Self {
            sidecar_path: None,
            sidecar: Some(file),
            ..Self::sidecar(PathBuf::new(), seed)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.overlay_tolerance > 0.0 && self.overlay_tolerance <= 1.0) {
            return Err(format!("overlay tolerance {} outside (0, 1]", self.overlay_tolerance));
        }
        match self.provider {
            ProviderKind::Sidecar if self.sidecar_path.is_none() && self.sidecar.is_none() => {
                Err("sidecar provider needs a sidecar path".into())
            }
            ProviderKind::Live if self.endpoint.is_none() || self.model.is_none() => {
                Err("live provider needs an endpoint and a model".into())
            }
            _ => Ok(()),
        }
    }

    /// The provider for this run. `api_key` is used by the live provider only.
    pub fn build_provider(&self, api_key: Option<String>) -> Result<Box<dyn MetadataProvider>, String> {
        self.validate()?;
        Ok(match self.provider {
            ProviderKind::Sidecar => match (&self.sidecar, &self.sidecar_path) {
                (Some(file), _) => Box::new(SidecarProvider::new(file.clone())),
                (None, Some(path)) => Box::new(SidecarProvider::from_path(path).map_err(|e| e.to_string())?),
                (None, None) => unreachable!("validated above"),
            },
            ProviderKind::Scripted => Box::new(ScriptedProvider::new(self.script.iter().cloned().map(Ok).collect())),
            ProviderKind::Live => {
                let mut cfg = LiveConfig::new(self.endpoint.clone().unwrap_or_default(), self.model.clone().unwrap_or_default());
                if api_key.is_some() {
                    cfg.api_key = api_key;
                }
                Box::new(LiveProvider::new(cfg).map_err(|e| e.to_string())?)
            }
        })
    }
}

/// Receives stage artifacts as the run progresses.
pub trait StageSink {
    fn artifact(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()>;
    /// Called once every artifact of `stage` has been handed over.
    fn reached(&mut self, stage: Stage, artifacts: &[&str]) -> std::io::Result<()>;
}

/// Writes artifacts into a directory.
pub struct DirSink {
    pub dir: PathBuf,
}

impl StageSink for DirSink {
    fn artifact(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), bytes)
    }

    fn reached(&mut self, _stage: Stage, _artifacts: &[&str]) -> std::io::Result<()> {
        Ok(())
    }
}

/// Keeps nothing.
pub struct NullSink;

impl StageSink for NullSink {
    fn artifact(&mut self, _: &str, _: &[u8]) -> std::io::Result<()> {
        Ok(())
    }

    fn reached(&mut self, _: Stage, _: &[&str]) -> std::io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceArtifact {
    pub group: String,
    pub cluster: usize,
    pub color: String,
    pub points: Vec<(f64, f64)>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub cluster: usize,
    pub overlay: OverlayReport,
    pub diagnostics: ReconDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub provider: String,
    pub seed: u64,
    pub validation: ValidationReport,
    pub forced: bool,
    pub axes: AxisReconciliation,
    pub groups: Vec<GroupReport>,
    pub overlay_pass: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub metadata: PlotMetadata,
    pub reconstructions: Vec<Reconstruction>,
    pub report: RunReport,
}

impl PipelineOutput {
    pub fn records(&self) -> Vec<IpdRecord> {
        self.reconstructions.iter().flat_map(|r| r.records.iter().cloned()).collect()
    }
}

fn json(value: &impl Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifact serializes");
    v.push(b'\n');
    v
}

/// Checks the gate can make without a provider: a locatable frame, numeric
/// tick labels on both axes and numbers in the block beneath the plot.
pub fn local_issues(geom: Option<&AxisGeometry>, reading: Option<&TickReading>) -> Vec<Issue> {
    let issue = |component, message: &str, suggestion: &str| Issue {
        component,
        message: message.into(),
        suggestion: suggestion.into(),
    };
    let (Some(_), Some(reading)) = (geom, reading) else {
        return vec![issue(
            Component::Ticks,
            "no plot frame with perpendicular axes was found",
            "crop to a single plot with both axes visible",
        )];
    };
    let mut out = Vec::new();
    if reading.x.iter().filter(|t| t.numeric_value.is_some()).count() < 2 {
        out.push(issue(Component::AxisLabels, "fewer than two numeric x tick labels", "keep the x tick labels inside the crop"));
    }
    if reading.y.iter().filter(|t| t.numeric_value.is_some()).count() < 2 {
        out.push(issue(Component::AxisLabels, "fewer than two numeric y tick labels", "keep the y tick labels inside the crop"));
    }
    let risk_numbers = reading
        .tokens
        .iter()
        .filter(|t| t.region_kind == RegionKind::RiskTable && t.numeric_value().is_some())
        .count();
    if risk_numbers == 0 {
        out.push(issue(
            Component::RiskTable,
            "no number-at-risk table beneath the plot",
            "include the risk table in the crop",
        ));
    }
    out
}

struct Gate {
    prepped: RasterImage,
    geom: Option<AxisGeometry>,
    reading: Option<TickReading>,
    report: ValidationReport,
}

fn gate(image: &RasterImage, edits: &EditList, provider: Option<&dyn MetadataProvider>) -> Result<Gate, PipelineError> {
    let st = Stage::Validated;
    let edited = apply_edits(image, &edits.edits).map_err(|e| PipelineError::new(st, e))?;
    let prepped = enhance(&edited).map_err(|e| PipelineError::new(st, e))?;
    let geom = locate_axes(&prepped).ok();
    let reading = geom
        .as_ref()
        .and_then(|g| read_ticks(&prepped, g, &GlyphOcrEngine::default()).ok());
    let mut report = match provider {
        Some(p) => validate_input(&prepped, p).map_err(|e| PipelineError::new(st, e))?,
        None => ValidationReport::passed(),
    };
    report.issues.extend(local_issues(geom.as_ref(), reading.as_ref()));
    report.ok = report.issues.is_empty();
    Ok(Gate {
        prepped,
        geom,
        reading,
        report,
    })
}

/// The input gate alone: edits, enhancement, local checks and, when given,
/// the provider's own verdict.
pub fn validate_only(
    image: &RasterImage,
    edits: &EditList,
    provider: Option<&dyn MetadataProvider>,
) -> Result<ValidationReport, PipelineError> {
    gate(image, edits, provider).map(|g| g.report)
}

/// Runs every stage on `image`, handing artifacts to `sink` as they are
/// produced. Fails with the name of the stage that could not complete.
pub fn run_pipeline(
    image: &RasterImage,
    edits: &EditList,
    provider: &dyn MetadataProvider,
    config: &PipelineConfig,
    sink: &mut dyn StageSink,
) -> Result<PipelineOutput, PipelineError> {
    let io = |stage| move |e: std::io::Error| PipelineError::new(stage, format!("writing artifacts: {e}"));

    // input gate
    let st = Stage::Validated;
    config.validate().map_err(|e| PipelineError::new(st, e))?;
    let Gate {
        prepped,
        geom,
        reading,
        report: validation,
    } = gate(image, edits, Some(provider))?;
    sink.artifact(VALIDATION_JSON, &json(&validation)).map_err(io(st))?;
    if !validation.ok && !config.force {
        let summary: Vec<String> = validation
            .issues
            .iter()
            .map(|i| format!("{:?}: {}", i.component, i.message))
            .collect();
        return Err(PipelineError {
            stage: st,
            message: format!("input rejected: {}", summary.join("; ")),
            issues: validation.issues,
        });
    }
    sink.reached(st, &[VALIDATION_JSON]).map_err(io(st))?;

    let st = Stage::Prepared;
    let png = prepped.encode_png().map_err(|e| PipelineError::new(st, e))?;
    sink.artifact(PREPPED_PNG, &png).map_err(io(st))?;
    sink.reached(st, &[PREPPED_PNG]).map_err(io(st))?;

    let st = Stage::Extracted;
    let geom = geom.ok_or_else(|| PipelineError::new(st, "plot frame not found"))?;
    let reading = reading.ok_or_else(|| PipelineError::new(st, "tick labels unreadable"))?;
    let metadata = extract_metadata(&prepped, &reading.tokens, provider).map_err(|e| PipelineError::new(st, e))?;
    let axes = kmgpt_core::mmpu::reconcile_axes(
        &metadata,
        detect_ranges(&reading.x, Axis::X).ok(),
        detect_ranges(&reading.y, Axis::Y).ok(),
    );
    let cal = Calibration::new(geom, axes.x, axes.y).map_err(|e| PipelineError::new(st, e))?;
    let params = ExtractParams {
        enhanced: true,
        ..ExtractParams::new(metadata.num_curves, config.seed)
    };
    let extraction = extract_curves(&prepped, &cal, &params).map_err(|e| PipelineError::new(st, e))?;
    let colors: Vec<Rgb> = extraction.clusters.iter().map(|c| c.medoid.rgb).collect();
    let assignment = match_groups(&metadata.groups, &colors);
    let traces: Vec<(&CurveTrace, Rgb)> = assignment
        .iter()
        .map(|&ci| {
            let t = extraction
                .traces
                .iter()
                .find(|t| t.group == ci)
                .ok_or_else(|| PipelineError::new(st, format!("no trace for cluster {ci}")))?;
            Ok((t, colors[ci]))
        })
        .collect::<Result<_, PipelineError>>()?;
    let trace_doc: Vec<TraceArtifact> = traces
        .iter()
        .zip(&metadata.groups)
        .zip(&assignment)
        .map(|(((t, rgb), g), &ci)| TraceArtifact {
            group: g.label.clone(),
            cluster: ci,
            color: hex_color(*rgb),
            points: t.points.clone(),
            scores: t.scores.clone(),
        })
        .collect();
    sink.artifact(METADATA_JSON, &json(&metadata)).map_err(io(st))?;
    sink.artifact(TRACES_JSON, &json(&trace_doc)).map_err(io(st))?;
    sink.reached(st, &[METADATA_JSON, TRACES_JSON]).map_err(io(st))?;

    let st = Stage::Reconstructed;
    let mut reconstructions = Vec::with_capacity(traces.len());
    let mut groups = Vec::with_capacity(traces.len());
    for (g, ((trace, _), info)) in traces.iter().zip(&metadata.groups).enumerate() {
        let curve = DigitizedCurve {
            points: trace.points.clone(),
            group: info.label.clone(),
        };
        let rec = reconstruct_ipd(&curve, &metadata.risk_table.row(g), None)
            .map_err(|e| PipelineError::new(st, format!("{}: {e}", info.label)))?;
        groups.push(GroupReport {
            group: info.label.clone(),
            cluster: assignment[g],
            overlay: overlay_check_with(&curve, &rec.records, config.overlay_tolerance),
            diagnostics: rec.diagnostics.clone(),
        });
        reconstructions.push(rec);
    }
    let all: Vec<IpdRecord> = reconstructions.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let mut csv = Vec::new();
    write_ipd_csv(&all, &mut csv).map_err(|e| PipelineError::new(st, e))?;
    let overlay = draw_overlay(&prepped, &cal, &reconstructions);
    let report = RunReport {
        provider: provider.name().to_string(),
        seed: config.seed,
        forced: config.force && !validation.ok,
        validation,
        axes,
        overlay_pass: groups.iter().all(|g| g.overlay.pass),
        groups,
    };
    sink.artifact(IPD_CSV, &csv).map_err(io(st))?;
    sink.artifact(OVERLAY_PNG, &overlay.encode_png().map_err(|e| PipelineError::new(st, e))?)
        .map_err(io(st))?;
    sink.artifact(REPORT_JSON, &json(&report)).map_err(io(st))?;
    sink.reached(st, &[IPD_CSV, OVERLAY_PNG, REPORT_JSON]).map_err(io(st))?;

    Ok(PipelineOutput {
        metadata,
        reconstructions,
        report,
    })
}

fn fill(img: &mut RasterImage, x0: f64, y0: f64, x1: f64, y1: f64) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let xa = x0.min(x1).round().clamp(0.0, w - 1.0) as usize;
    let xb = x0.max(x1).round().clamp(0.0, w - 1.0) as usize;
    let ya = y0.min(y1).round().clamp(0.0, h - 1.0) as usize;
    let yb = y0.max(y1).round().clamp(0.0, h - 1.0) as usize;
    for y in ya..=yb {
        for x in xa..=xb {
            img.set(x, y, OVERLAY_GREEN);
        }
    }
}

/// The rebuilt product-limit steps in green over the prepared image.
pub fn draw_overlay(prepped: &RasterImage, cal: &Calibration, recs: &[Reconstruction]) -> RasterImage {
    let mut img = prepped.clone();
    for rec in recs {
        let km = km_estimate(&rec.records);
        let end = rec.records.iter().map(|r| r.time).fold(0.0, f64::max).min(cal.x.max);
        let mut path = vec![(cal.x.min.max(0.0), 1.0)];
        for (&t, &s) in km.step_times.iter().zip(&km.probabilities) {
            if t > end {
                break;
            }
            let prev = path.last().unwrap().1;
            path.push((t, prev));
            path.push((t, s));
        }
        let last = path.last().unwrap().1;
        path.push((end, last));
        for w in path.windows(2) {
            let (u0, v0) = cal.to_pixel(w[0].0, w[0].1);
            let (u1, v1) = cal.to_pixel(w[1].0, w[1].1);
            // two pixels thick
            fill(&mut img, u0 - 1.0, v0 - 1.0, u1, v1);
        }
    }
    img
}

/// Runs the pipeline with every artifact written into `dir`, including the
/// input and edit list.
pub fn run_to_dir(
    image_bytes: &[u8],
    edits: &EditList,
    provider: &dyn MetadataProvider,
    config: &PipelineConfig,
    dir: &Path,
) -> Result<PipelineOutput, PipelineError> {
    let io = |e: std::io::Error| PipelineError::new(Stage::Created, format!("writing artifacts: {e}"));
    std::fs::create_dir_all(dir).map_err(io)?;
    let image = RasterImage::decode(image_bytes).map_err(|e| PipelineError::new(Stage::Created, e))?;
    let mut sink = DirSink { dir: dir.to_path_buf() };
    sink.artifact(INPUT_PNG, &image.encode_png().map_err(|e| PipelineError::new(Stage::Created, e))?)
        .map_err(io)?;
    sink.artifact(EDITS_JSON, edits.to_json().as_bytes()).map_err(io)?;
    run_pipeline(&image, edits, provider, config, &mut sink)
}
