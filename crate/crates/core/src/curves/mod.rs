//! Curve separation by color, consensus scoring, path tracing and
//! digitization of each curve into calibrated `(t, s)` points.

mod consensus;
mod digitize;
mod features;
mod kmedoids;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consensus::{consensus_scores, ConsensusScore, CONSENSUS_EPS, DEFAULT_NEIGHBORS};
pub use digitize::{digitize_columns, repair_overlaps, ColumnPoint};
pub use features::{extract_features, interior_region, InteriorRegion, PixelFeature};
pub use kmedoids::{cluster_curves, cluster_labels, inertia_for_medoids, Clustering, CurveCluster, RESTARTS};
pub use trace::{trace_path, TracedPath, LINK_DISTANCE};

use crate::geometry::Calibration;
use crate::raster::RasterImage;

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("no curve pixels in the plot interior")]
    NoCurvePixels,
    #[error("cannot form {k} clusters from {n} pixels")]
    TooFewPixels { k: usize, n: usize },
    #[error("k-NN with k={k} needs at least {} points, got {n}", k + 1)]
    InsufficientNeighbors { k: usize, n: usize },
    #[error("trace for group {group} has no confident points")]
    UnresolvableOverlap { group: usize },
}

/// One calibrated curve. `points` and `scores` are aligned; `pixel_path` is
/// the traced pixel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTrace {
    pub group: usize,
    pub points: Vec<(f64, f64)>,
    pub pixel_path: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExtractParams {
    pub num_curves: usize,
    pub enhanced: bool,
    pub seed: u64,
    pub neighbors: usize,
}

impl ExtractParams {
    pub fn new(num_curves: usize, seed: u64) -> Self {
        Self {
            num_curves,
            enhanced: false,
            seed,
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub clusters: Vec<CurveCluster>,
    /// Repaired traces, one per cluster label.
    pub traces: Vec<CurveTrace>,
    /// Traces before overlap repair.
    pub raw_traces: Vec<CurveTrace>,
    pub outliers: Vec<usize>,
}

/// Runs features, clustering, consensus, tracing, digitization and repair.
pub fn extract_curves(
    image: &RasterImage,
    cal: &Calibration,
    params: &ExtractParams,
) -> Result<Extraction, CurveError> {
    let features = extract_features(image, &cal.geom)?;
    let clustering = cluster_labels(&features, params.num_curves, params.enhanced, params.seed)?;
    let clusters = clustering.clusters(&features);

    let points: Vec<(f64, f64)> = features.iter().map(|f| (f.u as f64, f.v as f64)).collect();
    let scores: Vec<f64> = if points.len() > params.neighbors {
        consensus_scores(&points, &clustering.labels, params.neighbors)?
            .into_iter()
            .map(|c| c.score)
            .collect()
    } else {
        vec![0.0; points.len()]
    };

    let mut raw_traces = Vec::with_capacity(clusters.len());
    let mut outliers = Vec::new();
    for label in 0..params.num_curves {
        let members: Vec<usize> = (0..features.len())
            .filter(|&i| clustering.labels[i] == label)
            .collect();
        let pix: Vec<(usize, usize)> = members.iter().map(|&i| (features[i].u, features[i].v)).collect();
        let traced = trace_path(&pix);
        outliers.extend(traced.outliers.iter().map(|&j| members[j]));
        let kept: Vec<(usize, usize, f64)> = traced
            .path
            .iter()
            .map(|&j| (pix[j].0, pix[j].1, scores[members[j]]))
            .collect();
        let cols = digitize_columns(&kept);
        let pts: Vec<(f64, f64)> = cols.iter().map(|c| cal.to_data(c.u as f64, c.v)).collect();
        raw_traces.push(CurveTrace {
            group: label,
            points: pts,
            pixel_path: traced.path.iter().map(|&j| pix[j]).collect(),
            scores: cols.iter().map(|c| c.score).collect(),
        });
    }
    outliers.sort_unstable();
    let traces = repair_overlaps(&raw_traces, (cal.y.min, cal.y.max))?;
    Ok(Extraction {
        clusters,
        traces,
        raw_traces,
        outliers,
    })
}
