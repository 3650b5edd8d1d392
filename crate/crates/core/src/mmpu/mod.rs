//! Metadata extraction: an input gate, OCR of tick labels and risk tables,
//! and a multi-modal provider that fuses image and tokens into strict JSON.

mod colors;
mod extract;
mod ocr;
mod prompts;
mod provider;
mod regions;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TickToken;
use crate::prep::RegionKind;
use crate::raster::{PixelRect, RasterError};
use crate::recon::RiskTable;

pub use colors::{match_groups, parse_color_hint};
pub use extract::{
    cross_check_tokens, extract_metadata, reconcile_axes, validate_input, AxisConflict, AxisReconciliation,
    Resolution,
};
pub use ocr::{run_ocr, GlyphOcrEngine, OcrEngine, RawToken, TesseractEngine};
pub use prompts::{prompt, prompt_manifest, PromptAsset};
pub use regions::{read_ticks, text_layout, TextLayout, TickReading};
pub use provider::{
    live_limiter, LiveConfig, LiveProvider, MetadataProvider, Permit, ProviderError, ProviderRequest, ProviderTask,
    RateLimiter, ScriptedProvider, SidecarFile, SidecarProvider, API_KEY_ENV,
};

#[derive(Debug, Error)]
pub enum MmpuError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("OCR engine unavailable: {0}")]
    OcrUnavailable(String),
    #[error("OCR returned no text for a non-empty {kind:?} region")]
    OcrEmpty { kind: RegionKind },
    #[error("OCR engine failed: {0}")]
    OcrFailed(String),
    #[error("region {region:?} does not fit a {width}x{height} image")]
    RegionOutOfBounds { region: PixelRect, width: usize, height: usize },
    #[error("metadata does not match the schema: {0}")]
    MetadataSchema(String),
    #[error("metadata conflicts with the plot: {0}")]
    MetadataConflict(String),
    #[error("validation reply is malformed: {0}")]
    InvalidReport(String),
    #[error(transparent)]
    Image(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupInfo {
    pub label: String,
    #[serde(default)]
    pub color_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotMetadata {
    pub x_start: f64,
    pub x_end: f64,
    pub x_increment: f64,
    pub y_start: f64,
    pub y_end: f64,
    pub y_increment: f64,
    pub num_curves: usize,
    pub groups: Vec<GroupInfo>,
    pub risk_table: RiskTable,
    pub time_unit: String,
}

impl PlotMetadata {
    /// Every structural and risk-table invariant; the message names the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        let finite = [
            self.x_start,
            self.x_end,
            self.x_increment,
            self.y_start,
            self.y_end,
            self.y_increment,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("axis values must be finite".into());
        }
        if self.x_end <= self.x_start {
            return Err(format!("x_end {} must exceed x_start {}", self.x_end, self.x_start));
        }
        if self.y_end <= self.y_start {
            return Err(format!("y_end {} must exceed y_start {}", self.y_end, self.y_start));
        }
        if self.x_increment <= 0.0 || self.y_increment <= 0.0 {
            return Err("increments must be positive".into());
        }
        if self.num_curves == 0 {
            return Err("num_curves must be at least 1".into());
        }
        if self.groups.len() != self.num_curves || self.risk_table.counts.len() != self.num_curves {
            return Err(format!(
                "num_curves {} but {} groups and {} risk-table rows",
                self.num_curves,
                self.groups.len(),
                self.risk_table.counts.len()
            ));
        }
        if self.time_unit.trim().is_empty() {
            return Err("time_unit is empty".into());
        }
        self.risk_table.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    AxisLabels,
    Ticks,
    Curves,
    Legend,
    RiskTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Issue {
    pub component: Component,
    pub message: String,
    pub suggestion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn passed() -> Self {
        Self {
            ok: true,
            issues: vec![],
        }
    }

    pub fn from_issues(issues: Vec<Issue>) -> Self {
        Self {
            ok: issues.is_empty(),
            issues,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: PixelRect,
    pub region_kind: RegionKind,
}

impl OcrToken {
    pub fn numeric_value(&self) -> Option<f64> {
        crate::geometry::parse_number(&self.text)
    }

    pub fn to_tick(&self) -> TickToken {
        TickToken::new(self.text.clone(), self.bbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_metadata() -> PlotMetadata {
        PlotMetadata {
            x_start: 0.0,
            x_end: 24.0,
            x_increment: 6.0,
            y_start: 0.0,
            y_end: 1.0,
            y_increment: 0.2,
            num_curves: 2,
            groups: vec![
                GroupInfo {
                    label: "Treatment".into(),
                    color_hint: Some("#1f77b4".into()),
                },
                GroupInfo {
                    label: "Control".into(),
                    color_hint: Some("orange".into()),
                },
            ],
            risk_table: RiskTable {
                anchor_times: vec![0.0, 6.0, 12.0, 18.0, 24.0],
                counts: vec![vec![100, 80, 60, 40, 20], vec![100, 70, 45, 25, 10]],
            },
            time_unit: "months".into(),
        }
    }

    #[test]
    fn sample_is_valid() {
        assert_eq!(sample_metadata().check(), Ok(()));
    }

    #[test]
    fn json_is_strict() {
        let mut v = serde_json::to_value(sample_metadata()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<PlotMetadata>(v).is_err());
        let mut v = serde_json::to_value(sample_metadata()).unwrap();
        v.as_object_mut().unwrap().remove("time_unit");
        let err = serde_json::from_value::<PlotMetadata>(v).unwrap_err();
        assert!(err.to_string().contains("time_unit"));
    }

    #[test]
    fn invariants_checked() {
        let mut m = sample_metadata();
        m.risk_table.counts[1][2] = 90;
        assert!(m.check().unwrap_err().contains("increase"));
        let mut m = sample_metadata();
        m.num_curves = 3;
        assert!(m.check().is_err());
        let mut m = sample_metadata();
        m.x_end = 0.0;
        assert!(m.check().is_err());
    }

    #[test]
    fn token_box_serializes_as_box() {
        let t = OcrToken {
            text: "12".into(),
            confidence: 0.9,
            bbox: PixelRect::new(1, 2, 3, 4),
            region_kind: RegionKind::AxisLabels,
        };
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["box"]["x1"], 3);
        assert_eq!(v["region_kind"], "axis-labels");
        assert_eq!(t.numeric_value(), Some(12.0));
    }

    #[test]
    fn report_ok_tracks_issues() {
        assert!(ValidationReport::from_issues(vec![]).ok);
        let r = ValidationReport::from_issues(vec![Issue {
            component: Component::RiskTable,
            message: "missing".into(),
            suggestion: "crop less".into(),
        }]);
        assert!(!r.ok);
    }
}
