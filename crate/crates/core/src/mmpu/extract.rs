//! Input gate, metadata extraction with one repair round, and cross-checks
//! against OCR and detected tick grids.

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::prompts::prompt;
use super::provider::{MetadataProvider, ProviderRequest, ProviderTask};
use super::{MmpuError, OcrToken, PlotMetadata, ValidationReport};
use crate::geometry::{Axis, AxisRange};
use crate::prep::RegionKind;
use crate::raster::RasterImage;

fn encode_image(image: &RasterImage) -> Result<String, MmpuError> {
    Ok(base64::engine::general_purpose::STANDARD.encode(image.encode_png()?))
}

/// The reply must be exactly one JSON object.
fn parse_object<T: DeserializeOwned>(reply: &str) -> Result<T, String> {
    let trimmed = reply.trim();
    if !trimmed.starts_with('{') {
        return Err("reply is not a JSON object".into());
    }
    serde_json::from_str(trimmed).map_err(|e| e.to_string())
}

/// Asks the provider whether every plot component is present.
pub fn validate_input(image: &RasterImage, provider: &dyn MetadataProvider) -> Result<ValidationReport, MmpuError> {
    let request = ProviderRequest {
        task: ProviderTask::Validate,
        system_prompt: prompt(ProviderTask::Validate).text.to_string(),
        user_text: "Check this plot.".into(),
        image_base64: encode_image(image)?,
    };
    let reply = provider.complete(&request)?;
    let report: ValidationReport = parse_object(&reply).map_err(MmpuError::InvalidReport)?;
    if report.ok != report.issues.is_empty() {
        return Err(MmpuError::InvalidReport(
            "ok must be true exactly when issues is empty".into(),
        ));
    }
    Ok(report)
}

/// Requests strict metadata, re-prompting once with the parser error when
/// the first reply does not fit the schema, then enforces every invariant and
/// the OCR cross-check.
pub fn extract_metadata(
    image: &RasterImage,
    tokens: &[OcrToken],
    provider: &dyn MetadataProvider,
) -> Result<PlotMetadata, MmpuError> {
    let system = prompt(ProviderTask::Extract).text.to_string();
    let image_base64 = encode_image(image)?;
    let token_json = serde_json::to_string(tokens).expect("tokens serialize");
    let first = provider.complete(&ProviderRequest {
        task: ProviderTask::Extract,
        system_prompt: system.clone(),
        user_text: format!("OCR tokens:\n{token_json}"),
        image_base64: image_base64.clone(),
    })?;
    let metadata = match parse_object::<PlotMetadata>(&first) {
        Ok(m) => m,
        Err(err) => {
            tracing::info!(%err, "metadata reply rejected, asking for a repair");
            let repair = prompt(ProviderTask::Repair)
                .text
                .replace("{error}", &err)
                .replace("{previous}", &first);
            let second = provider.complete(&ProviderRequest {
                task: ProviderTask::Repair,
                system_prompt: system,
                user_text: format!("{repair}\nOCR tokens:\n{token_json}"),
                image_base64,
            })?;
            parse_object::<PlotMetadata>(&second).map_err(MmpuError::MetadataSchema)?
        }
    };
    metadata.check().map_err(MmpuError::MetadataConflict)?;
    cross_check_tokens(&metadata, tokens)?;
    Ok(metadata)
}

/// Rejects an `x_start`/`x_end` that matches no axis-label token and lies off
/// the tick grid spanned by tokens spaced at the provider's increment.
pub fn cross_check_tokens(metadata: &PlotMetadata, tokens: &[OcrToken]) -> Result<(), MmpuError> {
    let values: Vec<f64> = tokens
        .iter()
        .filter(|t| t.region_kind == RegionKind::AxisLabels)
        .filter_map(|t| t.numeric_value())
        .collect();
    if values.is_empty() {
        return Ok(());
    }
    let tol = |v: f64| 1e-9 * v.abs().max(1.0);
    let inc = metadata.x_increment;
    // tokens with a neighbor one increment away form the tick grid
    let grid: Vec<f64> = values
        .iter()
        .copied()
        .filter(|v| values.iter().any(|w| ((w - v).abs() - inc).abs() <= tol(inc)))
        .collect();
    for (field, value) in [("x_start", metadata.x_start), ("x_end", metadata.x_end)] {
        let present = values.iter().any(|v| (v - value).abs() <= tol(value));
        let on_grid = grid.iter().any(|v| {
            let k = (value - v) / metadata.x_increment;
            (k - k.round()).abs() <= 1e-6
        });
        if !present && !on_grid {
            return Err(MmpuError::MetadataConflict(format!(
                "{field} {value} matches no tick label and is off the tick grid"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Provider,
    Ocr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisConflict {
    pub axis: Axis,
    pub field: &'static str,
    pub provider: f64,
    pub ocr: f64,
    pub resolution: Resolution,
}

/// Axis ranges to calibrate with, plus every disagreement between the
/// provider and the OCR tick grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisReconciliation {
    pub x: AxisRange,
    pub y: AxisRange,
    pub conflicts: Vec<AxisConflict>,
}

fn reconcile_one(axis: Axis, provider: AxisRange, ocr: Option<AxisRange>, out: &mut Vec<AxisConflict>) -> AxisRange {
    let Some(ocr) = ocr else {
        return provider;
    };
    let mut result = provider;
    let mut ocr_won = false;
    for (field, p, o) in [("start", provider.min, ocr.min), ("end", provider.max, ocr.max)] {
        if (p - o).abs() <= 1e-9 * p.abs().max(1.0) {
            continue;
        }
        let resolution = if (p - o).abs() > ocr.increment * (1.0 + 1e-9) {
            ocr_won = true;
            if field == "start" {
                result.min = o;
            } else {
                result.max = o;
            }
            Resolution::Ocr
        } else {
            Resolution::Provider
        };
        out.push(AxisConflict {
            axis,
            field,
            provider: p,
            ocr: o,
            resolution,
        });
    }
    if ocr_won {
        result.increment = ocr.increment;
    }
    result
}

/// OCR wins a disagreement larger than one tick increment; smaller ones defer
/// to the provider. Percent-scaled y ticks (maximum above 1.5) are read as
/// percentages.
pub fn reconcile_axes(metadata: &PlotMetadata, x: Option<AxisRange>, y: Option<AxisRange>) -> AxisReconciliation {
    let y = y.map(|r| {
        if r.max > 1.5 {
            AxisRange {
                min: r.min / 100.0,
                max: r.max / 100.0,
                increment: r.increment / 100.0,
            }
        } else {
            r
        }
    });
    let mut conflicts = Vec::new();
    let px = AxisRange {
        min: metadata.x_start,
        max: metadata.x_end,
        increment: metadata.x_increment,
    };
    let py = AxisRange {
        min: metadata.y_start,
        max: metadata.y_end,
        increment: metadata.y_increment,
    };
    let x = reconcile_one(Axis::X, px, x, &mut conflicts);
    let y = reconcile_one(Axis::Y, py, y, &mut conflicts);
    AxisReconciliation { x, y, conflicts }
}
