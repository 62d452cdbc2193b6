//! `truckflow` command-line interface.
//!
//! Exit status: 0 on success, 1 when the pipeline rejects the data or a file
//! cannot be read or written, 2 on a usage error (bad flag, missing input
//! selection, unknown feature name). Diagnostics go to standard error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "truckflow", version, about = "OD truck flow modelling and explanation")]
pub struct Cli {
    /// `key = value` file whose entries act as flags; flags on the command
    /// line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate synthetic zones.csv and od_flows.csv from a gravity law.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Filter and join flows with zone attributes into dataset.csv.
    #[command(args_override_self = true)]
    Ingest(IngestArgs),
    /// Descriptive statistics of the joined dataset.
    #[command(args_override_self = true)]
    Stats(StatsArgs),
    /// Train a model on the training partition.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score a model on the test partition.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// k-fold cross-validation on the training partition.
    #[command(args_override_self = true)]
    Cv(CvArgs),
    /// Grid search by cross-validated RMSLE.
    #[command(args_override_self = true)]
    Tune(TuneArgs),
    /// Shapley values (and optionally one interaction pair) for explained rows.
    #[command(args_override_self = true)]
    Explain(ExplainArgs),
    /// Render SVG charts from explain output.
    #[command(subcommand)]
    Plot(PlotCmd),
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected true or false, got `{other}`")),
    }
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Joined dataset written by `ingest`; replaces the raw inputs below.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// OD flow table.
    #[arg(long, value_name = "FILE")]
    pub flows: Option<PathBuf>,
    /// Zone attribute table, or zone centroids when `--counties` is given.
    #[arg(long, value_name = "FILE")]
    pub zones: Option<PathBuf>,
    /// County attribute rows to aggregate into zones.
    #[arg(long, value_name = "FILE", requires = "zones")]
    pub counties: Option<PathBuf>,
    /// County to zone reassignment applied before aggregation.
    #[arg(long, value_name = "FILE", requires = "counties")]
    pub crosswalk: Option<PathBuf>,
    /// Zone identifiers to drop, one per line.
    #[arg(long, value_name = "FILE")]
    pub exclude: Option<PathBuf>,
    /// Drop flows whose origin and destination are the same zone.
    #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub exclude_intrazonal: bool,
}

#[derive(Debug, Args, Clone)]
pub struct SplitArgs {
    /// Seed for the train/test split (and the model, where one is trained).
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Share of rows assigned to training.
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
}

#[derive(Debug, Args, Clone)]
pub struct ModelArgs {
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_child_weight: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub colsample_bytree: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of zones.
    #[arg(long, default_value_t = 60)]
    pub zones: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for zones.csv and od_flows.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Gravity scale factor k.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Origin population exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Destination population exponent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Distance-decay exponent.
    #[arg(long)]
    pub decay: Option<f64>,
    /// Standard deviation of the log-normal flow noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Choose the scale so the median flow is near 278 trips.
    #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub calibrate: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output file for the joined dataset.
    #[arg(long, default_value = "dataset.csv")]
    pub out: PathBuf,
    /// Also write the zone attribute table (useful after county aggregation).
    #[arg(long, value_name = "FILE")]
    pub zones_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model file to write.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Split seed; defaults to the seed stored in the model.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Metrics CSV; standard output only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score ln(1 + trips) instead of ln(trips).
    #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub rmsle_plus_one: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Cross-validate on every row instead of the training partition.
    #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub all_rows: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub rmsle_plus_one: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid file: one `name,value,value,...` line per hyperparameter.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Per-configuration results CSV.
    #[arg(long, default_value = "grid_results.csv")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
    pub rmsle_plus_one: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Partition {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Split seed; defaults to the seed stored in the model.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Which rows to explain.
    #[arg(long, value_enum, default_value = "train")]
    pub partition: Partition,
    /// Explain at most this many rows (in shuffled split order).
    #[arg(long, default_value_t = 500)]
    pub sample: usize,
    #[arg(long, default_value = "shap_values.csv")]
    pub out: PathBuf,
    /// Feature pair `A,B` whose interaction values are written as well.
    #[arg(long, value_name = "A,B")]
    pub interactions: Option<String>,
    /// Output for the interaction pair; defaults to
    /// `interaction_<A>_<B>.csv` next to `--out`.
    #[arg(long)]
    pub interactions_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotCommon {
    /// Input CSV written by `explain`.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum PlotCmd {
    /// Global importance bars.
    #[command(args_override_self = true)]
    Importance {
        #[command(flatten)]
        common: PlotCommon,
        /// Colour bars by correlation of the feature with the target rather
        /// than with its Shapley values.
        #[arg(long, value_parser = parse_bool, num_args = 0..=1, default_missing_value = "true", default_value = "false")]
        sign_vs_target: bool,
    },
    /// Per-feature swarms of Shapley values.
    #[command(args_override_self = true)]
    Beeswarm {
        #[command(flatten)]
        common: PlotCommon,
    },
    /// Feature value against Shapley value with the zero crossing.
    #[command(args_override_self = true)]
    Dependence {
        #[command(flatten)]
        common: PlotCommon,
        #[arg(long, default_value = "GCD")]
        feature: String,
        /// Moving-average window for the zero-crossing search.
        #[arg(long, default_value_t = truckflow::shap::DEFAULT_SMOOTHING_WINDOW)]
        window: usize,
    },
    /// Interaction values of a pair written by `explain --interactions`.
    #[command(args_override_self = true)]
    Interaction {
        #[command(flatten)]
        common: PlotCommon,
    },
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let root = Cli::command();
    let args = match config::expand(args, &root) {
        Ok(a) => a,
        Err(config::ConfigError::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(config::ConfigError::Io(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(commands::CliError::Domain(e)) => {
            eprintln!("error: {}", chain_message(&e));
            ExitCode::from(1)
        }
    }
}

/// Joins an error chain, skipping causes already spelled out by their parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if !msg.contains(&part) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&part);
        }
    }
    msg
}
