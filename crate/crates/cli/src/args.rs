use std::path::PathBuf;

use benchconc::abm::{self, DecayLaw};
use benchconc::ingest::SnapshotFormat;
use benchconc::metrics::{GroupBy, DEFAULT_BLEND_ALPHA, DEFAULT_MIN_AGE_YEARS};
use benchconc::sweep;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "benchconc", version, about = "Benchmark-ecosystem concentration toolkit")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = abm::DEFAULT_SEED)]
    pub seed: u64,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Format of the input snapshot files.
    #[arg(long, global = true, value_enum, default_value_t = InputFormat::Csv)]
    pub format: InputFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// Comma-separated with a header row.
    Csv,
    /// One JSON object per line.
    Json,
}

impl From<InputFormat> for SnapshotFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Csv => SnapshotFormat::Csv,
            InputFormat::Json => SnapshotFormat::JsonLines,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Institutional (or country) authority shares and concentration.
    Authority(AuthorityArgs),
    /// Tripartite benchmark-author-institution graph statistics.
    Graph(GraphArgs),
    /// One run of the attention model.
    Simulate(SimulateArgs),
    /// Phase diagram over (beta, gamma) and its tipping contour.
    Sweep(SweepArgs),
    /// Yearly indicators, PCA and country Pareto.
    Analytics(AnalyticsArgs),
    /// Load and check inputs without computing anything.
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Authority(_) => "authority",
            Command::Graph(_) => "graph",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Analytics(_) => "analytics",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkInput {
    /// Benchmark snapshot file.
    #[arg(long)]
    pub benchmarks: PathBuf,

    /// Affiliation sidecar (benchmark_id,author,institution,country).
    #[arg(long)]
    pub affiliations: Option<PathBuf>,

    /// Alias table (variant,canonical) applied to institution and country labels.
    #[arg(long)]
    pub aliases: Option<PathBuf>,

    /// Reject release dates after this day [default: no upper bound].
    #[arg(long)]
    pub snapshot_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupByArg {
    Institution,
    Country,
}

impl From<GroupByArg> for GroupBy {
    fn from(g: GroupByArg) -> Self {
        match g {
            GroupByArg::Institution => GroupBy::Institution,
            GroupByArg::Country => GroupBy::Country,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Baseline,
    RatePerAge,
    Windowed,
    Decay,
}

impl VariantArg {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantArg::Baseline => "baseline",
            VariantArg::RatePerAge => "rate-per-age",
            VariantArg::Windowed => "windowed",
            VariantArg::Decay => "exponential-decay",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AuthorityArgs {
    #[command(flatten)]
    pub input: BenchmarkInput,

    /// Star weight in the authority blend; several values run an ablation.
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = vec![DEFAULT_BLEND_ALPHA])]
    pub blend_alpha: Vec<f64>,

    #[arg(long, value_enum, default_value_t = GroupByArg::Institution)]
    pub group_by: GroupByArg,

    /// Age adjustment applied to benchmark weights.
    #[arg(long, value_enum, default_value_t = VariantArg::Baseline)]
    pub variant: VariantArg,

    /// Window W in years (windowed variant).
    #[arg(long)]
    pub window_years: Option<f64>,

    /// Half-life h in years (decay variant).
    #[arg(long)]
    pub half_life_years: Option<f64>,

    /// Age floor in years (rate-per-age variant).
    #[arg(long, default_value_t = DEFAULT_MIN_AGE_YEARS)]
    pub min_age_years: f64,

    /// Date ages are measured from [default: snapshot date, else latest release].
    #[arg(long)]
    pub reference_date: Option<NaiveDate>,

    /// Size of the reported top-k and of the Jaccard sets.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,

    /// Top-k used to form the Spearman union.
    #[arg(long, default_value_t = 20)]
    pub rank_k: usize,

    /// Entities dropped before computing shares (repeatable).
    #[arg(long)]
    pub exclude: Vec<String>,

    /// Also compare the standard age/recency variants against baseline.
    #[arg(long)]
    pub robustness: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Benchmark,
    Author,
    Institution,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    #[command(flatten)]
    pub input: BenchmarkInput,

    /// Core order for the betweenness subgraph.
    #[arg(long = "k-core", default_value_t = 3)]
    pub k_core: usize,

    /// Node kinds included in the degree Gini [default: all].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub gini_kinds: Vec<KindArg>,

    /// Rows listed in the summary's top-degree table.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayLawArg {
    Subtractive,
    Multiplicative,
}

impl From<DecayLawArg> for DecayLaw {
    fn from(d: DecayLawArg) -> Self {
        match d {
            DecayLawArg::Subtractive => DecayLaw::Subtractive,
            DecayLawArg::Multiplicative => DecayLaw::Multiplicative,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Attachment exponent.
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,

    /// Debt decay per step.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,

    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,

    /// Benchmarks present at step 0.
    #[arg(long, default_value_t = 1)]
    pub initial: usize,

    #[arg(long, value_enum, default_value_t = DecayLawArg::Subtractive)]
    pub decay_law: DecayLawArg,

    /// Fraction of the trajectory averaged for the steady state.
    #[arg(long, default_value_t = abm::DEFAULT_TAIL_FRACTION)]
    pub tail_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Over-fit penalty.
    #[arg(long, default_value_t = 0.02)]
    pub beta: f64,

    /// Entry probability per step.
    #[arg(long, default_value_t = 1e-4)]
    pub gamma: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, default_value_t = sweep::BETA_RANGE.0)]
    pub beta_min: f64,
    #[arg(long, default_value_t = sweep::BETA_RANGE.1)]
    pub beta_max: f64,
    #[arg(long, default_value_t = sweep::DEFAULT_BETA_COUNT)]
    pub beta_count: usize,

    #[arg(long, default_value_t = sweep::GAMMA_RANGE.0)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = sweep::GAMMA_RANGE.1)]
    pub gamma_max: f64,
    /// Log-spaced gamma values.
    #[arg(long, default_value_t = sweep::DEFAULT_GAMMA_COUNT)]
    pub gamma_count: usize,

    /// Prepend gamma = 0 to the gamma axis.
    #[arg(long)]
    pub zero_gamma: bool,

    #[arg(long, default_value_t = sweep::DEFAULT_REPLICATES)]
    pub replicates: usize,

    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,

    /// HHI level traced by the tipping contour.
    #[arg(long, default_value_t = sweep::DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyticsArgs {
    /// Model snapshot file.
    #[arg(long)]
    pub models: PathBuf,

    /// Benchmark snapshot file (enables the country Pareto and authority trends).
    #[arg(long)]
    pub benchmarks: Option<PathBuf>,

    #[arg(long, requires = "benchmarks")]
    pub affiliations: Option<PathBuf>,

    /// Alias table applied to manufacturer, institution and country labels.
    #[arg(long)]
    pub aliases: Option<PathBuf>,

    #[arg(long)]
    pub snapshot_date: Option<NaiveDate>,

    /// Principal components retained (capped by the number of years).
    #[arg(long, default_value_t = 2)]
    pub components: usize,

    /// Star weight for the yearly authority series.
    #[arg(long = "alpha", default_value_t = DEFAULT_BLEND_ALPHA)]
    pub blend_alpha: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub benchmarks: Option<PathBuf>,
    #[arg(long, requires = "benchmarks")]
    pub affiliations: Option<PathBuf>,
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[arg(long)]
    pub snapshot_date: Option<NaiveDate>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn alpha_list() {
        let cli = Cli::parse_from(["benchconc", "authority", "--benchmarks", "b.csv", "--alpha", "0,0.25,0.5"]);
        let Command::Authority(a) = cli.command else { panic!() };
        assert_eq!(a.blend_alpha, vec![0.0, 0.25, 0.5]);
    }
}
