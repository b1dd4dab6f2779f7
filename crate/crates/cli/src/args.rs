//! Command-line flags and the matching TOML sections.
//!
//! Every option is optional on both sides so a flag can override a file
//! value field by field. Defaults are applied by the commands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "acdkit", version, about = "Transaction duration modeling toolkit")]
pub struct Cli {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a tick CSV and write a clean store with an ingest report.
    Ingest(IngestArgs),
    /// Simulate an ACD model and write ticks that `ingest` accepts.
    Simulate(SimulateArgs),
    /// Build, filter and summarize duration series.
    #[command(subcommand)]
    Durations(DurationsCommand),
    /// Estimate a diurnal profile and divide it out.
    Deseason(DeseasonArgs),
    /// Fit one ACD specification by maximum likelihood.
    Fit(FitArgs),
    /// Residual diagnostics for a fitted model.
    Diagnose(DiagnoseArgs),
    /// Distribution fits and EDF tests with Monte-Carlo critical values.
    Gof(GofArgs),
    /// Filter, deseasonalize, aggregate, fit and diagnose in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Subcommand)]
pub enum DurationsCommand {
    /// Transaction-aggregated durations (T = 2 gives trade durations).
    Aggregate(AggregateArgs),
    /// Price or volume durations.
    Thin(ThinArgs),
    /// Drop zero and over-cap durations.
    Filter(FilterArgs),
    /// Summary statistics.
    Describe(DescribeArgs),
}

macro_rules! merge_fields {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArgs {
    /// linear, log1 or log2.
    #[arg(long)]
    pub mean_form: Option<String>,
    /// exponential, weibull, gamma or gg.
    #[arg(long)]
    pub family: Option<String>,
    /// Shape parameters: k (weibull), d (gamma) or d,m (gg).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub shape: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Lag orders `m,q` used when alpha and beta are not given.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// unconditional, sample or window:<minutes>.
    #[arg(long)]
    pub init: Option<String>,
}

impl ModelArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; mean_form, family, shape, omega, alpha, beta, orders, init);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestArgs {
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl IngestArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub n_days: Option<usize>,
    #[arg(long)]
    pub n_per_day: Option<usize>,
    /// Diurnal profile JSON applied to the simulated durations.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub model: ModelArgs,
}

impl SimulateArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; output, n_days, n_per_day, profile);
        self.model.merge(&other.model);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateArgs {
    /// Tick CSV or ingested store directory.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Number of transactions per duration.
    #[arg(long)]
    pub t: Option<usize>,
    /// Drop zero tick gaps before aggregating.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub drop_zero: Option<bool>,
    /// Drop tick gaps above this many seconds before aggregating.
    #[arg(long)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinArgs {
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Cumulative absolute price change threshold.
    #[arg(long)]
    pub price: Option<f64>,
    /// Cumulative volume threshold.
    #[arg(long)]
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterArgs {
    /// Duration CSV (`day,start_time,duration`).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub drop_zero: Option<bool>,
    #[arg(long)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeArgs {
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Write JSON here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lb_lags: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationsConfig {
    #[serde(default)]
    pub aggregate: AggregateArgs,
    #[serde(default)]
    pub thin: ThinArgs,
    #[serde(default)]
    pub filter: FilterArgs,
    #[serde(default)]
    pub describe: DescribeArgs,
}

impl AggregateArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, t, drop_zero, cap);
    }
}

impl ThinArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, price, volume);
    }
}

impl FilterArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, drop_zero, cap);
    }
}

impl DescribeArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, lb_lags);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeseasonArgs {
    /// Duration CSV.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Spline node spacing in minutes.
    #[arg(long)]
    pub bin_minutes: Option<f64>,
    /// Use a Fourier profile with this many harmonics instead of a spline.
    #[arg(long)]
    pub fourier: Option<usize>,
    /// Apply an existing profile JSON instead of estimating one.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

impl DeseasonArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, bin_minutes, fourier, profile);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Duration CSV.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Number of optimizer starts.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Divide by the sample mean before fitting (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    #[command(flatten)]
    #[serde(default)]
    pub model: ModelArgs,
}

impl FitArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, starts, normalize);
        self.model.merge(&other.model);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseArgs {
    /// Duration CSV the model was fitted on.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// `fit.json` written by the fit command.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lb_lags: Option<usize>,
    #[arg(long)]
    pub pit_bins: Option<usize>,
    #[arg(long)]
    pub acf_lags: Option<usize>,
}

impl DiagnoseArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, fit, output, lb_lags, pit_bins, acf_lags);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofArgs {
    /// Duration CSV.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Null families: exponential, weibull, gamma, gpd, normal.
    #[arg(long, value_delimiter = ',')]
    pub family: Option<Vec<String>>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Monte-Carlo replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// re_estimate or fixed_parameters.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Scale D and V by sqrt(n) (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub scaled: Option<bool>,
    /// Divide by the sample mean first (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    /// Also test each day separately.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub within_day: Option<bool>,
    /// Critical-value cache directory.
    #[arg(long, env = "ACDKIT_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

impl GofArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, family, level, replicates, protocol, scaled, normalize, within_day, cache_dir);
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineArgs {
    /// Tick CSV or ingested store directory.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory for the report bundle.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Aggregation levels T.
    #[arg(long = "t", value_delimiter = ',')]
    pub t_list: Option<Vec<usize>>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub drop_zero: Option<bool>,
    /// Drop tick gaps above this many seconds.
    #[arg(long)]
    pub cap: Option<f64>,
    /// Spline node spacing in minutes.
    #[arg(long)]
    pub bin_minutes: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
    /// unconditional, sample or window:<minutes>.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub lb_lags: Option<usize>,
    #[arg(long)]
    pub acf_lags: Option<usize>,
}

impl PipelineArgs {
    pub fn merge(&mut self, other: &Self) {
        merge_fields!(self, other; input, output, t_list, drop_zero, cap, bin_minutes, starts, init, lb_lags, acf_lags);
    }
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub ingest: IngestArgs,
    #[serde(default)]
    pub simulate: SimulateArgs,
    #[serde(default)]
    pub durations: DurationsConfig,
    #[serde(default)]
    pub deseason: DeseasonArgs,
    #[serde(default)]
    pub fit: FitArgs,
    #[serde(default)]
    pub diagnose: DiagnoseArgs,
    #[serde(default)]
    pub gof: GofArgs,
    #[serde(default)]
    pub pipeline: PipelineArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }
}

pub fn require<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::input(format!("missing required setting '{what}'")))
}
