use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use coredn::glm::Family;
use coredn::harness::{Method, TransformKind};
use coredn::Error;
use serde::Serialize;

mod commands;
mod staging;

pub const DEFAULT_SEED: u64 = 20170417;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "coredn",
    version,
    about = "Leverage-score coresets for dependency networks"
)]
pub struct Cli {
    /// Maximum number of worker threads (defaults to one per core).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Sample a weighted coreset from a data matrix.
    Coreset(CoresetArgs),
    /// Fit a dependency network, optionally on a coreset.
    Train(TrainArgs),
    /// Score a saved model, or cross-validate full, coreset and uniform networks.
    Eval(EvalArgs),
    /// Draw samples from a saved network with a Gibbs sampler.
    Gibbs(GibbsArgs),
    /// Export the strongest positive dependencies of a saved network.
    Structure(StructureArgs),
    /// Build the polygon Poisson instance and report query separation.
    Hard(HardArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Data matrix as CSV, one row per observation.
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,

    /// The first row holds variable names.
    #[arg(long)]
    pub header: bool,

    /// Elementwise transform applied to the input; repeat to chain.
    #[arg(long = "transform", value_name = "log1p|clip01|floor")]
    pub transforms: Vec<TransformKind>,
}

#[derive(Debug, Args, Serialize)]
pub struct InterceptArgs {
    /// Fit an intercept in every regression (default).
    #[arg(long, overrides_with = "no_intercept")]
    pub intercept: bool,

    /// Fit regressions through the origin.
    #[arg(long, overrides_with = "intercept")]
    pub no_intercept: bool,
}

impl InterceptArgs {
    pub fn enabled(&self) -> bool {
        !self.no_intercept
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SamplingArgs {
    /// leverage, uniform or full.
    #[arg(long, default_value = "leverage")]
    pub method: Method,

    /// Target error for the leverage construction; sets the sample size.
    #[arg(long, conflicts_with = "fraction")]
    pub eps: Option<f64>,

    /// Sample size as a fraction of the rows.
    #[arg(long)]
    pub fraction: Option<f64>,

    /// Constant D in the leverage sample size.
    #[arg(long, default_value_t = 1.0)]
    pub const_d: f64,

    /// Scale the leverage sample size by ln(d) to cover all d regressions at once.
    #[arg(long)]
    pub boost_logd: bool,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CoresetArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    pub sampling: SamplingArgs,

    /// Coreset CSV (index, weight, variables).
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,

    /// Also write the draw statistics as JSON.
    #[arg(long, value_name = "JSON")]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "coreset"])))]
pub struct TrainArgs {
    /// Data matrix as CSV.
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,

    /// Train on a coreset file written by `coreset` instead.
    #[arg(long, value_name = "CSV")]
    pub coreset: Option<PathBuf>,

    /// The input CSV has a header row.
    #[arg(long)]
    pub header: bool,

    #[arg(long = "transform", value_name = "log1p|clip01|floor")]
    pub transforms: Vec<TransformKind>,

    #[arg(long, default_value = "gaussian")]
    pub family: Family,

    #[command(flatten)]
    pub intercept: InterceptArgs,

    /// Compress the input before training: full, leverage or uniform.
    #[arg(long, default_value = "full")]
    pub method: Method,

    #[arg(long, conflicts_with = "fraction")]
    pub eps: Option<f64>,

    #[arg(long)]
    pub fraction: Option<f64>,

    #[arg(long, default_value_t = 1.0)]
    pub const_d: f64,

    #[arg(long)]
    pub boost_logd: bool,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Model JSON.
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, default_value = "gaussian")]
    pub family: Family,

    /// Score this model on the input; without it, run cross-validation.
    #[arg(long, value_name = "JSON")]
    pub model: Option<PathBuf>,

    /// With --model: reference network for relative error and structure distance.
    #[arg(long, value_name = "JSON", requires = "model")]
    pub reference: Option<PathBuf>,

    /// Transform applied to predictions before the RMSE (Poisson defaults to floor).
    #[arg(long, value_name = "log1p|clip01|floor")]
    pub predict_transform: Option<TransformKind>,

    /// Keep predictions untransformed.
    #[arg(long, conflicts_with = "predict_transform")]
    pub raw_predictions: bool,

    /// Methods to compare; repeatable (default: full, leverage, uniform).
    #[arg(long = "method")]
    pub methods: Vec<Method>,

    /// Sample fractions; repeatable (default: 0.1, 0.2, 0.3, 0.4).
    #[arg(long = "fraction")]
    pub fractions: Vec<f64>,

    #[arg(long, default_value_t = 10)]
    pub folds: usize,

    #[command(flatten)]
    pub intercept: InterceptArgs,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Results CSV.
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,

    /// JSON mirror of the results with the config echo (default: --out with a .json extension).
    #[arg(long, value_name = "JSON")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GibbsArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,

    #[arg(long, default_value_t = 1000)]
    pub samples: usize,

    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,

    #[arg(long, default_value_t = 1)]
    pub thin: usize,

    /// Starting state, comma separated (default: all zeros).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub init: Vec<f64>,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Trajectory CSV.
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StructureArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,

    /// Number of positive edges to keep.
    #[arg(long, default_value_t = 70)]
    pub edges: usize,

    /// Edge list CSV.
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,

    /// Also write a Graphviz file.
    #[arg(long, value_name = "DOT")]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct HardArgs {
    /// Number of polygon vertices.
    #[arg(long, default_value_t = 16)]
    pub n: usize,

    /// Which vertices are present, e.g. 1011; drawn from --seed when omitted.
    #[arg(long)]
    pub bits: Option<String>,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    /// Instance CSV of the present points.
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,

    /// Separation report JSON.
    #[arg(long, value_name = "JSON")]
    pub report: PathBuf,
}

/// 3: bad input data, 4: bad parameters, 5: numerical failure, 6: I/O, 1: other.
fn exit_code(err: &anyhow::Error) -> u8 {
    fn classify(e: &Error) -> u8 {
        match e {
            Error::Variable { source, .. } | Error::Experiment { source, .. } => classify(source),
            Error::EmptyMatrix { .. }
            | Error::NonFinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidCount { .. }
            | Error::FamilyMismatch { .. }
            | Error::Parse { .. }
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::InvalidParameter(_) | Error::SizeOverflow(_) => 4,
            Error::ZeroRank
            | Error::SvdNotConverged
            | Error::SpectralNormNotConverged { .. }
            | Error::EmptyDraw
            | Error::NonFiniteValue(_) => 5,
            Error::Io(_) => 6,
        }
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return classify(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 6;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match serde_json::to_string(&cli) {
        Ok(echo) => eprintln!("config: {echo}"),
        Err(e) => eprintln!("config: <unserialisable: {e}>"),
    }
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
