use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use dfl_core::calibration::{train_spatial_model, TrainingSource};
use dfl_core::config::SiteConfig;
use dfl_core::evaluation::{run_method, Calibrations, EvaluationReport, Fingerprints, Method, MethodRow};
use dfl_core::geometry::NeighborMode;
use dfl_core::io::estimates::EstimateSeries;
use dfl_core::io::model::ModelFile;
use dfl_core::io::report::write_report;
use dfl_core::io::scenario::Scenario;
use dfl_core::io::trace::TraceFile;
use dfl_core::localizers::imaging::ImagingModel;
use dfl_core::localizers::lda::Shrinkage;
use dfl_core::localizers::rti::EmptyRoomMeans;
use dfl_core::rss_model::SpatialParams;
use dfl_core::site::Site;
use dfl_core::{DflError, Result};

#[derive(Parser)]
#[command(name = "dfl", version, about = "Device-free localization from link RSS traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a trace with ground truth from a scenario file.
    Simulate(SimulateArgs),
    /// Learn per-link model parameters from a training trace.
    Train(TrainArgs),
    /// Run one localization method over a trace.
    Run(RunArgs),
    /// Score estimate series against the trace's ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    site: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the trace's ground-truth positions instead of KRTI estimates.
    #[arg(long, conflicts_with = "fixed")]
    true_locations: bool,
    /// Skip the spatial fit and give every link these parameters.
    #[arg(long, num_args = 2, value_names = ["BETA", "LAMBDA"])]
    fixed: Option<Vec<f64>>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    site: PathBuf,
    /// Trained model; required by mll and hmml.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    method: Method,
    /// Build the motion model without walls or entrances.
    #[arg(long)]
    no_walls: bool,
    /// Labeled trace to train the lda fingerprints from.
    #[arg(long)]
    fingerprints: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, required = true, num_args = 1..)]
    estimates: Vec<PathBuf>,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Include per-method runtimes in the text report.
    #[arg(long)]
    timing: bool,
}

fn load_site(path: &Path) -> Result<Site> {
    Site::new(SiteConfig::load(path)?)
}

fn load_trace(path: &Path, site: &Site) -> Result<TraceFile> {
    let trace = TraceFile::read(path)?;
    trace.check_site(site)?;
    Ok(trace)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let site = scenario.site()?;
    let trace = scenario.simulate(&site)?;
    let file = scenario.to_trace_file(&site, &trace);
    file.write(&args.out)?;
    println!("wrote {} frames to {}", file.frames.len(), args.out.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let site = load_site(&args.site)?;
    let trace = load_trace(&args.trace, &site)?;
    let source = if let Some(v) = &args.fixed {
        TrainingSource::Fixed(SpatialParams::new(v[0], v[1])?)
    } else if args.true_locations {
        let truth = trace
            .truth
            .clone()
            .ok_or_else(|| DflError::Input("--true-locations needs ground-truth records in the trace".into()))?;
        TrainingSource::TrueLocations(truth)
    } else {
        TrainingSource::Krti
    };
    let model = train_spatial_model(&trace.frames, &site, &source)?;
    let fallbacks = model.links.iter().filter(|l| l.fallback).count();
    ModelFile::new(&site, model).write(&args.out)?;
    println!("trained {} links ({fallbacks} on fallback spatial parameters)", site.num_links());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let site = load_site(&args.site)?;
    let trace = load_trace(&args.trace, &site)?;
    let model = args.model.as_deref().map(|p| ModelFile::load(p, &site)).transpose()?;
    let empty_room = if trace.empty_segments.is_empty() {
        None
    } else {
        Some(EmptyRoomMeans::from_frames(trace.empty_room_frames(), site.num_links())?)
    };
    let fingerprints = match &args.fingerprints {
        Some(p) => {
            let labeled = load_trace(p, &site)?;
            let truth = labeled
                .truth
                .as_ref()
                .ok_or_else(|| DflError::Input("fingerprint trace has no ground-truth records".into()))?;
            Some(Fingerprints::train(&site, &labeled.frames, truth, Shrinkage::Fixed(0.2))?)
        }
        None => None,
    };
    let calib = Calibrations { model, empty_room, fingerprints };
    let imaging = Arc::new(ImagingModel::new(site.grid(), site.links(), site.deltas(), &site.config().imaging)?);
    let mode = if args.no_walls { NeighborMode::NoWalls } else { NeighborMode::Walls };
    let estimates = run_method(args.method, &site, &calib, imaging, mode, &trace.frames)?;
    let series = EstimateSeries {
        method: args.method.name().to_string(),
        timestamps: trace.frames.iter().map(|f| f.timestamp).collect(),
        estimates,
    };
    series.write(&args.out)?;
    println!("wrote {} estimates to {}", series.estimates.len(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let trace = TraceFile::read(&args.trace)?;
    let truth = trace.truth.as_ref().ok_or_else(|| DflError::Input("trace has no ground-truth records".into()))?;
    let mut rows = Vec::new();
    for path in &args.estimates {
        let series = EstimateSeries::read(path)?;
        let aligned = series.timestamps.len() == trace.frames.len()
            && series.timestamps.iter().zip(&trace.frames).all(|(t, f)| *t == f.timestamp);
        if !aligned {
            return Err(DflError::Input(format!("{}: timestamps do not match the trace", path.display())));
        }
        rows.push(MethodRow::evaluate(&series.method, &series.estimates, truth)?);
    }
    let report = EvaluationReport { rows };
    write_report(&report, &args.out, args.timing)?;
    println!("wrote {} report rows to {}", report.rows.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
