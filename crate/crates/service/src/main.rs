use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use kmgpt_core::mmpu::{MetadataProvider, SidecarProvider, API_KEY_ENV};
use kmgpt_core::prep::EditList;
use kmgpt_core::raster::RasterImage;
use kmgpt_core::recon::OVERLAY_TOLERANCE;
use kmgpt_meta::{Model, Priors, SamplerConfig};
use kmgpt_service::bench::{parse_cells, run_bench};
use kmgpt_service::meta_cmd::{run_meta, IntervalSpec, MetaOptions};
use kmgpt_service::pipeline::validate_only;
use kmgpt_service::{run_to_dir, AppState, PipelineConfig, ProviderKind};

#[derive(Parser)]
#[command(name = "kmgpt", version, about = "Reconstruct individual patient data from Kaplan-Meier plots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on one image, writing every stage artifact.
    Run(RunArgs),
    /// Synthetic round-trip benchmark over the parameter grid.
    Bench(BenchArgs),
    /// Bayesian pooling of reconstructed IPD across studies.
    Meta(MetaArgs),
    /// Check an image is a complete KM plot without running the pipeline.
    Validate(ValidateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Live,
    Sidecar,
    Scripted,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    edits: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sidecar")]
    provider: ProviderArg,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// JSON array of provider replies, for the scripted provider.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = OVERLAY_TOLERANCE)]
    overlay_tolerance: f64,
    /// Continue when the input gate reports issues.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// `all` or comma-separated cell codes (e.g. LLL,MHM).
    #[arg(long, default_value = "all")]
    cells: String,
    #[arg(long, default_value_t = 2)]
    reps: usize,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetaArgs {
    /// One CSV per study with time, status and group columns.
    #[arg(long, num_args = 1.., required = true)]
    ipd: Vec<PathBuf>,
    #[arg(long, default_value = "group")]
    group_col: String,
    /// `auto` or comma-separated cut points ending at the last follow-up time.
    #[arg(long, default_value = "auto")]
    intervals: IntervalSpec,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 5000)]
    draws: usize,
    #[arg(long, default_value_t = 2000)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated RMST horizons (default: the grid end).
    #[arg(long, value_delimiter = ',')]
    rmst: Vec<f64>,
    #[arg(long, default_value_t = 101)]
    band_points: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    edits: Option<PathBuf>,
    /// Also ask the sidecar's recorded validation verdict.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, env = "KMGPT_JOB_DIR", default_value = "kmgpt-jobs")]
    job_dir: PathBuf,
    /// Concurrent pipelines (default: CPU count).
    #[arg(long)]
    workers: Option<usize>,
}

fn read_edits(path: Option<&PathBuf>) -> anyhow::Result<EditList> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            EditList::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(EditList::default()),
    }
}

fn run(args: RunArgs) -> anyhow::Result<bool> {
    let script = match &args.script {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).context("script must be a JSON array of strings")?,
        None => vec![],
    };
    let config = PipelineConfig {
        provider: match args.provider {
            ProviderArg::Live => ProviderKind::Live,
            ProviderArg::Sidecar => ProviderKind::Sidecar,
            ProviderArg::Scripted => ProviderKind::Scripted,
        },
        sidecar_path: args.sidecar,
        sidecar: None,
        script,
        endpoint: args.endpoint,
        model: args.model,
        seed: args.seed,
        overlay_tolerance: args.overlay_tolerance,
        force: args.force,
    };
    // the live provider reads the key from the environment itself
    let provider = config.build_provider(None).map_err(anyhow::Error::msg)?;
    let edits = read_edits(args.edits.as_ref())?;
    let bytes = std::fs::read(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    let out = run_to_dir(&bytes, &edits, provider.as_ref(), &config, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&out.report)?);
    Ok(out.report.overlay_pass)
}

fn bench(args: BenchArgs) -> anyhow::Result<bool> {
    let cells = parse_cells(&args.cells).map_err(anyhow::Error::msg)?;
    let s = run_bench(&cells, args.reps, args.seed, Some(&args.out))?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "success {}/{}  median IAE {}  median AE {}  median |dOS| {}",
        s.successes(),
        s.total(),
        fmt(s.median_iae()),
        fmt(s.median_ae()),
        fmt(s.median_mos_ae())
    );
    for r in s.runs.iter().filter(|r| !r.success()) {
        if let kmgpt_synthbench::RunOutcome::Failed(e) = &r.outcome {
            println!("failed {} rep {}: {e}", r.cell, r.rep);
        }
    }
    Ok(true)
}

fn meta(args: MetaArgs) -> anyhow::Result<bool> {
    let opts = MetaOptions {
        ipd: args.ipd,
        group_col: args.group_col,
        intervals: args.intervals,
        sampler: SamplerConfig {
            chains: args.chains,
            warmup: args.warmup,
            draws: args.draws,
            seed: args.seed,
            model: Model::Hierarchical(Priors::default()),
        },
        rmst: args.rmst,
        band_points: args.band_points,
        out: args.out,
    };
    let results = run_meta(&opts)?;
    for (name, s) in &results {
        let median = s.pooled_median.median.map_or("not reached".into(), |m| format!("{m:.2}"));
        println!("{name}: pooled median {median}, max R-hat {:.3}, min ESS {:.0}", s.max_rhat, s.min_ess);
    }
    Ok(results.values().all(|s| s.max_rhat < 1.05))
}

fn validate(args: ValidateArgs) -> anyhow::Result<bool> {
    let image = RasterImage::load(&args.image).with_context(|| format!("reading {}", args.image.display()))?;
    let edits = read_edits(args.edits.as_ref())?;
    let provider: Option<Box<dyn MetadataProvider>> = match &args.sidecar {
        Some(p) => Some(Box::new(SidecarProvider::from_path(p)?)),
        None => None,
    };
    let report = validate_only(&image, &edits, provider.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.ok)
}

fn serve(args: ServeArgs) -> anyhow::Result<bool> {
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let state = AppState::new(&args.job_dir, workers)?;
    if std::env::var_os(API_KEY_ENV).is_some() {
        tracing::info!("{API_KEY_ENV} is ignored by the server; keys arrive per request");
    }
    tokio::runtime::Runtime::new()?.block_on(kmgpt_service::serve(&args.bind, state))?;
    Ok(true)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Meta(a) => meta(a),
        Command::Validate(a) => validate(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
