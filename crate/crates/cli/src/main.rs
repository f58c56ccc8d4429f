//! `hapto`: batch tools and the live session server.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hapto_core::sim::MIN_BENCH_SAMPLES;
use hapto_session::Framing;

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "hapto", version, about = "Haptic rendering of depth-map models")]
struct Cli {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a depth map into a smooth envelope and a texture residual.
    Filter(FilterArgs),
    /// Mean and Gaussian curvature of a depth map and the derived friction map.
    Curvature(CurvatureArgs),
    /// Build a Gaussian level-of-detail pyramid.
    Pyramid(PyramidArgs),
    /// Replay a HIP trajectory against a model and write the trace.
    Simulate(SimulateArgs),
    /// Measure the latency of a single proxy update.
    Bench(BenchArgs),
    /// Run the live session server.
    Serve(ServeArgs),
    /// Write a synthetic model directory.
    Demo(DemoArgs),
}

#[derive(Args, Debug, Clone)]
struct FilterFlags {
    /// Spatial spread in lattice units.
    #[arg(long)]
    sigma_s: Option<f64>,
    /// Range spread in sample units.
    #[arg(long)]
    sigma_r: Option<f64>,
    /// Half-width of the filter window in lattice units.
    #[arg(long)]
    radius: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum GridFormat {
    #[default]
    Pgm,
    Csv,
}

impl GridFormat {
    fn ext(self) -> &'static str {
        match self {
            GridFormat::Pgm => "pgm",
            GridFormat::Csv => "csv",
        }
    }
}

#[derive(Args, Debug)]
struct FilterArgs {
    /// Depth map (.pgm or .csv, optional .json sidecar).
    input: PathBuf,
    /// Output directory for envelope and texture grids.
    out_dir: PathBuf,
    #[command(flatten)]
    filter: FilterFlags,
    #[arg(long, value_enum, default_value_t)]
    format: GridFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Surface {
    Texture,
    Depth,
}

#[derive(Args, Debug)]
struct CurvatureArgs {
    input: PathBuf,
    out_dir: PathBuf,
    /// Workspace radius R used by the friction map.
    #[arg(long = "radius-r", value_name = "R")]
    workspace_r: Option<f64>,
    /// Upper clamp of the friction coefficient; `inf` disables it.
    #[arg(long)]
    mu_max: Option<f64>,
    /// Surface to differentiate.
    #[arg(long, value_enum, default_value = "texture")]
    on: Surface,
    #[command(flatten)]
    filter: FilterFlags,
    #[arg(long, value_enum, default_value_t)]
    format: GridFormat,
}

#[derive(Args, Debug)]
struct PyramidArgs {
    input: PathBuf,
    out_dir: PathBuf,
    #[arg(long)]
    levels: Option<usize>,
    /// Pre-smoothing Gaussian sigma in lattice units.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct MaterialFlags {
    /// Spring constant.
    #[arg(long)]
    k: Option<f64>,
    /// Proxy step gain in (0, 1).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu_s: Option<f64>,
    #[arg(long)]
    mu_max: Option<f64>,
    /// Note gain per unit force.
    #[arg(long)]
    g0: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Model directory.
    model: PathBuf,
    /// Trajectory: JSON spec or CSV with `t,x,y,z` columns.
    trajectory: PathBuf,
    /// Trace CSV to write.
    out: PathBuf,
    /// Also write note events as CSV.
    #[arg(long, value_name = "FILE")]
    events: Option<PathBuf>,
    /// Write metrics JSON here instead of standard output.
    #[arg(long, value_name = "FILE")]
    metrics: Option<PathBuf>,
    /// Tick rate for CSV trajectories.
    #[arg(long, default_value_t = hapto_core::sim::DEFAULT_RATE)]
    rate: f64,
    /// Ignore the model's friction map.
    #[arg(long, conflicts_with = "compare_friction")]
    no_friction: bool,
    /// Also run without texture and friction and report the convergence lag.
    #[arg(long)]
    compare_friction: bool,
    /// Record per-tick wall-clock time in the metrics.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    material: MaterialFlags,
}

#[derive(Args, Debug)]
struct BenchArgs {
    model: PathBuf,
    /// Number of timed proxy updates.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(MIN_BENCH_SAMPLES as u64..))]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the statistics as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    no_friction: bool,
    #[command(flatten)]
    material: MaterialFlags,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// A model directory or a directory of model directories.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long, value_enum)]
    framing: Option<FramingArg>,
    /// Maximum pyramid levels per model.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FramingArg {
    Newline,
    Length,
}

impl From<FramingArg> for Framing {
    fn from(f: FramingArg) -> Self {
        match f {
            FramingArg::Newline => Framing::Newline,
            FramingArg::Length => Framing::Length,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DemoChoice {
    Sinusoid,
    Relief,
    Pillars,
    Sphere,
    /// Sinusoid with a poke trajectory and a low step gain.
    FrictionLag,
    /// Gentle sinusoid with a poke-then-drag trajectory.
    ForceTrace,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(value_enum)]
    kind: DemoChoice,
    out_dir: PathBuf,
    /// Grid side in samples.
    #[arg(long, default_value_t = 129)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure classes, mapped to exit status 2 and 1.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait InputContext<T> {
    fn input(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => Config::load(path).input()?,
        None => Config::default(),
    };
    match cli.command {
        Command::Filter(a) => commands::filter(&config, a),
        Command::Curvature(a) => commands::curvature(&config, a),
        Command::Pyramid(a) => commands::pyramid(&config, a),
        Command::Simulate(a) => commands::simulate(&config, a),
        Command::Bench(a) => commands::bench(&config, a),
        Command::Serve(a) => commands::serve(&config, a),
        Command::Demo(a) => commands::demo(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
