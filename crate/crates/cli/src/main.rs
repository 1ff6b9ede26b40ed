//! `tessera`: tessellate → aggregate → train → forecast → evaluate → hedge.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tessera::data::TripKind;
use tessera::{ModelKind, Scheme};

/// Exit 1: the invocation itself is wrong. Exit 2: the data or a fit failed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(tessera::Error),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Data(e) => e.fmt(f),
        }
    }
}

impl From<tessera::Error> for Failure {
    fn from(e: tessera::Error) -> Self {
        Failure::Data(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "tessera", version, about = "Spatio-temporal taxi demand/supply forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; falls back to the config file, then TESSERA_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a geohash grid or Voronoi tessellation from trips or series sites.
    Tessellate(TessellateArgs),
    /// Count trips per region and time bin.
    Aggregate(AggregateArgs),
    /// Generate a synthetic periodic series matrix.
    Synth(SynthArgs),
    /// Train a recurrent forecaster and write a checkpoint.
    Train(TrainArgs),
    /// Random hyper-parameter search; the output is a valid --config file.
    Search(SearchArgs),
    /// Recursive multi-step forecast from a checkpoint.
    Forecast(ForecastArgs),
    /// SMAPE/MASE/RMSE report over one or more forecast runs.
    Evaluate(EvaluateArgs),
    /// Combine expert checkpoints online with discounted HEDGE.
    Hedge(HedgeArgs),
}

#[derive(Args, Debug)]
pub struct TessellateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Geohash level.
    #[arg(long)]
    level: Option<usize>,
    /// Voronoi region count (K-Means k).
    #[arg(long)]
    regions: Option<usize>,
    /// Trip CSV; Voronoi sites are K-Means centroids of its demand points.
    #[arg(long)]
    trips: Option<PathBuf>,
    /// JSON mapping of trip CSV header aliases.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Series whose sidecar sites define the regions (instead of trips).
    #[arg(long, conflicts_with = "trips")]
    series: Option<PathBuf>,
    /// Also write a per-cell count heat map (trips input only).
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trips: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    tessellation: Option<PathBuf>,
    #[arg(long)]
    bin_minutes: Option<u32>,
    /// Which trips to count.
    #[arg(long, default_value = "demand")]
    kind: TripKind,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    bin_minutes: Option<u32>,
    #[arg(long)]
    base: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    skew: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    tessellation: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Select epochs by recursive forecasts of this many steps.
    #[arg(long)]
    validation_horizon: Option<usize>,
    /// Cap on optimizer steps per repeat.
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Also write every repeat as `<output stem>.r<k>.json`.
    #[arg(long)]
    save_repeats: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of sampled configurations.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    /// Maps series regions onto the model's regions when their ids differ.
    #[arg(long)]
    tessellation: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// First forecast step; defaults to the start of the model's test block.
    #[arg(long)]
    origin: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    tessellation: Option<PathBuf>,
    /// Forecast CSVs, one per run.
    #[arg(long, num_args = 1..)]
    forecasts: Vec<PathBuf>,
    /// MASE seasonal period.
    #[arg(long)]
    seasonal_period: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
pub struct HedgeArgs {
    #[command(flatten)]
    common: Common,
    /// Expert checkpoints.
    #[arg(long, num_args = 1..)]
    experts: Vec<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    tessellation: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    origin: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Grid-search γ and β on the horizon preceding the origin.
    #[arg(long, conflicts_with_all = ["gamma", "beta"])]
    tune: bool,
    /// Also write the combined forecast as a forecast CSV.
    #[arg(long)]
    combined: Option<PathBuf>,
    /// Selection trace CSV.
    #[arg(short, long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Tessellate(a) => commands::tessellate(a),
        Command::Aggregate(a) => commands::aggregate(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Search(a) => commands::search(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Hedge(a) => commands::hedge(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
