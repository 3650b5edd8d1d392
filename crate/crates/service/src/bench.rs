//! The synthetic benchmark driven through the full pipeline, with the
//! fixture's own metadata as the sidecar.

use std::fs;
use std::path::Path;

use kmgpt_core::mmpu::{SidecarFile, SidecarProvider};
use kmgpt_core::prep::EditList;
use kmgpt_core::recon::write_ipd_csv;
use kmgpt_synthbench::{run_grid, Fixture, GridCell, GridSummary, RenderStyle};

use crate::pipeline::{run_pipeline, NullSink, PipelineConfig, PipelineError, PipelineOutput};

pub fn sidecar_for(fx: &Fixture) -> SidecarFile {
    SidecarFile {
        metadata: fx.plot.metadata.clone(),
        validation: None,
    }
}

/// Runs one fixture with no edits and the fixture seed.
pub fn fixture_pipeline(fx: &Fixture) -> Result<PipelineOutput, PipelineError> {
    let sidecar = sidecar_for(fx);
    let provider = SidecarProvider::new(sidecar.clone());
    let config = PipelineConfig::inline_sidecar(sidecar, fx.seed);
    run_pipeline(&fx.plot.image, &EditList::default(), &provider, &config, &mut NullSink)
}

/// `all` or comma-separated cell codes such as `LLL,MHM`.
pub fn parse_cells(spec: &str) -> Result<Vec<GridCell>, String> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(GridCell::all());
    }
    spec.split(',').map(|c| c.parse().map_err(|e| format!("{e}"))).collect()
}

/// Runs the grid; with `out`, also writes each fixture PNG, its sidecar,
/// the reconstructed CSV, `summary.csv` and `cells.csv`.
pub fn run_bench(cells: &[GridCell], reps: usize, seed: u64, out: Option<&Path>) -> anyhow::Result<GridSummary> {
    if let Some(dir) = out {
        fs::create_dir_all(dir.join("fixtures"))?;
        fs::create_dir_all(dir.join("recon"))?;
    }
    let summary = run_grid(cells, reps, seed, &RenderStyle::default(), |fx| {
        let name = fx.name();
        if let Some(dir) = out {
            let fixtures = dir.join("fixtures");
            fx.plot
                .image
                .save_png(fixtures.join(format!("{name}.png")))
                .map_err(|e| e.to_string())?;
            let side = serde_json::to_vec_pretty(&sidecar_for(fx)).map_err(|e| e.to_string())?;
            fs::write(fixtures.join(format!("{name}.sidecar.json")), side).map_err(|e| e.to_string())?;
        }
        let output = fixture_pipeline(fx).map_err(|e| e.to_string())?;
        if let Some(dir) = out {
            let f = fs::File::create(dir.join("recon").join(format!("{name}.csv"))).map_err(|e| e.to_string())?;
            write_ipd_csv(&output.records(), f).map_err(|e| e.to_string())?;
        }
        Ok(output.reconstructions.into_iter().map(|r| r.records).collect())
    });
    if let Some(dir) = out {
        summary.write_summary_csv(fs::File::create(dir.join("summary.csv"))?)?;
        summary.write_cells_csv(fs::File::create(dir.join("cells.csv"))?)?;
    }
    Ok(summary)
}
