//! `evac`: dataset generation, surrogate training, environment estimation,
//! simulation, validation scenarios, experiments and the HTTP service.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use evac_core::RoomSpec;

/// Default model file for `estimate`, `experiment` and `serve`.
pub const MODEL_ENV: &str = "EVAC_MODEL";

#[derive(Parser, Debug)]
#[command(name = "evac", version, about = "Crowd evacuation simulation and estimation", arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print a versioned JSON envelope instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate random rooms and write them as CSV.
    GenDataset(GenDatasetArgs),
    /// Train a surrogate on a CSV corpus.
    Train(TrainArgs),
    /// Share of rows a model predicts within a relative error.
    Score(ScoreArgs),
    /// Estimate the evacuation time of an environment graph.
    Estimate(EstimateArgs),
    /// Simulate an environment graph or a single room.
    Simulate(SimulateArgs),
    /// Run the validation scenarios.
    Validate(ValidateArgs),
    /// Estimation versus simulation experiments.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Corpus, training, scoring and suite comparison in one run.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Draw flow durations from the short desk range.
    #[arg(long)]
    pub desk_scale: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetArg {
    Tt,
    AvgExitTime,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ActivationArg {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "tt")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 400)]
    pub hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub lr: f64,
    /// Scale inputs to [0, 1] and outputs by the mean target.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, value_enum, default_value = "sigmoid")]
    pub activation: ActivationArg,
    #[arg(long)]
    pub bias: bool,
    /// Rows from the end of the data that drive the learning-rate plateau rule.
    #[arg(long, default_value_t = 0)]
    pub validation: usize,
    /// Rows from the end of the data kept out of training entirely.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long, env = MODEL_ENV)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub threshold: f64,
    /// Score only the last N rows (0 scores all).
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FetArg {
    Simple,
    Diamond,
}

#[derive(Args, Debug)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "simple")]
    pub fet: FetArg,
    /// Feed the model out-of-range inputs unchanged.
    #[arg(long)]
    pub no_clamp: bool,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, env = MODEL_ENV)]
    pub model: PathBuf,
    /// Model for the average exit time.
    #[arg(long)]
    pub model_avg: Option<PathBuf>,
    /// Per-room table (the default text output).
    #[arg(long)]
    pub table: bool,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("what").required(true).args(["graph", "room"]))]
pub struct SimulateArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// `width,length,exit_size,input_flow,flow_duration,initial_population`.
    #[arg(long, value_parser = parse_room)]
    pub room: Option<RoomSpec>,
    /// Also estimate the graph with this model and report the error.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub max_time: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Walk,
    Corner,
    Counterflow,
    Exitalloc,
    Showcase,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub only: Option<Scenario>,
}

#[derive(Subcommand, Debug)]
pub enum Experiment {
    /// Estimate and simulate every environment of a suite.
    Compare(CompareArgs),
    /// Chains of copies of one room, 3 up to `--max` rooms.
    Chain(ChainArgs),
    /// The three-floor nightclub next to its published timings.
    Nightclub(NightclubArgs),
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Suite file (default: the bundled suite).
    #[arg(long)]
    pub suite: Option<PathBuf>,
    #[arg(long, env = MODEL_ENV)]
    pub model: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

pub const DEFAULT_CHAIN_ROOM: &str = "28,6,5.6,99";

#[derive(Args, Debug)]
pub struct ChainArgs {
    /// `width,length,exit_size,initial_population`.
    #[arg(long, value_parser = parse_closed_room, default_value = DEFAULT_CHAIN_ROOM)]
    pub room: RoomSpec,
    #[arg(long, default_value_t = 29)]
    pub max: usize,
    #[arg(long, env = MODEL_ENV)]
    pub model: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Args, Debug)]
pub struct NightclubArgs {
    #[arg(long, env = MODEL_ENV)]
    pub model: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = MODEL_ENV)]
    pub model: Option<PathBuf>,
    #[arg(long, env = evac_service::GRAPHS_DIR_ENV, default_value = "graphs")]
    pub graphs_dir: PathBuf,
    /// Simulation jobs running at once.
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 3000)]
    pub count: usize,
    #[arg(long, default_value_t = 500)]
    pub holdout: usize,
    /// Cap on training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after scoring the surrogate.
    #[arg(long)]
    pub skip_suite: bool,
    /// Write the trained model here.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    /// Write the generated corpus here.
    #[arg(long)]
    pub save_data: Option<PathBuf>,
}

fn parse_numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let xs: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", p.trim())))
        .collect::<Result<_, _>>()?;
    if xs.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", xs.len()));
    }
    if xs.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("values must be finite and non-negative".into());
    }
    Ok(xs)
}

fn population(x: f64) -> Result<u32, String> {
    if x.fract() != 0.0 || x > u32::MAX as f64 {
        return Err(format!("initial population must be a whole number, got {x}"));
    }
    Ok(x as u32)
}

pub fn parse_room(s: &str) -> Result<RoomSpec, String> {
    let x = parse_numbers(s, 6)?;
    let spec = RoomSpec::new(x[0], x[1], x[2], x[3], x[4], population(x[5])?);
    spec.validate_physical().map_err(|e| e.to_string())?;
    Ok(spec)
}

pub fn parse_closed_room(s: &str) -> Result<RoomSpec, String> {
    let x = parse_numbers(s, 4)?;
    let spec = RoomSpec::closed(x[0], x[1], x[2], population(x[3])?);
    spec.validate_physical().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    commands::run(&cli)
}
