use std::fs;
use std::path::PathBuf;

use aoi_core::analytic::PreemptionDenominator;
use aoi_core::sim::Discipline;
use aoi_core::DistributionSpec;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "aoi",
    version,
    about = "Average age of information for G/G/1/1 systems"
)]
pub struct Cli {
    /// Print machine-readable JSON instead of a table.
    #[arg(long, global = true)]
    pub json: bool,

    /// JSON file with default seed, cycles, samples and MRL grid settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Base seed; overrides the config file.
    #[arg(long, global = true, env = "AOI_SEED")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discrete-event simulation.
    Simulate(SimulateArgs),
    /// Exact average age by quadrature or Monte Carlo.
    Exact(ExactArgs),
    /// Upper bounds applicable to the system.
    Bound(BoundArgs),
    /// Parameter sweep from a JSON spec or a built-in preset.
    Sweep(SweepArgs),
    /// Mean-residual-life class and NBUE check of one law.
    CheckProperties(CheckArgs),
    /// Distribution of the number of arrivals per renewal cycle (dropping).
    Kpmf(KpmfArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DisciplineArg {
    Dropping,
    Preemption,
}

impl From<DisciplineArg> for Discipline {
    fn from(d: DisciplineArg) -> Self {
        match d {
            DisciplineArg::Dropping => Discipline::Dropping,
            DisciplineArg::Preemption => Discipline::PreemptionInService,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    /// Pr(Y > S).
    Success,
    /// Pr(Y < S).
    Failure,
}

impl From<DenominatorArg> for PreemptionDenominator {
    fn from(d: DenominatorArg) -> Self {
        match d {
            DenominatorArg::Success => PreemptionDenominator::SuccessProbability,
            DenominatorArg::Failure => PreemptionDenominator::FailureProbability,
        }
    }
}

/// Inline JSON, or `@path` to read it from a file.
pub fn parse_dist(raw: &str) -> Result<DistributionSpec, String> {
    let text = match raw.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?,
        None => raw.to_string(),
    };
    DistributionSpec::from_json(&text).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    #[arg(long, value_enum)]
    pub discipline: DisciplineArg,
    /// Interarrival law as JSON or @file.
    #[arg(long, value_parser = parse_dist, value_name = "DIST")]
    pub interarrival: DistributionSpec,
    /// Service law as JSON or @file.
    #[arg(long, value_parser = parse_dist, value_name = "DIST")]
    pub service: DistributionSpec,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Renewal cycles to record.
    #[arg(long)]
    pub cycles: Option<u64>,
    /// Event budget before the run is declared divergent.
    #[arg(long)]
    pub max_events: Option<u64>,
    /// Write the per-event age trace to this CSV file.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Monte Carlo replicates.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Skip closed forms for exponential laws.
    #[arg(long)]
    pub force_generic: bool,
    /// Paired Monte Carlo instead of quadrature for preemption terms.
    #[arg(long)]
    pub monte_carlo: bool,
    #[arg(long, value_enum, default_value = "success")]
    pub denominator: DenominatorArg,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep spec JSON file.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "preset",
        required_unless_present = "preset"
    )]
    pub spec: Option<PathBuf>,
    /// Built-in sweep.
    #[arg(long, value_parser = ["dropping-rate", "dropping-shift", "dropping-imrl", "preemption-rate"])]
    pub preset: Option<String>,
    /// Override the Monte Carlo replicates of the spec.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Override the simulation cycles of the spec.
    #[arg(long)]
    pub cycles: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Law as JSON or @file.
    #[arg(long, value_parser = parse_dist, value_name = "DIST")]
    pub dist: DistributionSpec,
    /// Points of the MRL grid.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Slack allowed in monotonicity comparisons.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KpmfArgs {
    #[arg(long, value_parser = parse_dist, value_name = "DIST")]
    pub interarrival: DistributionSpec,
    #[arg(long, value_parser = parse_dist, value_name = "DIST")]
    pub service: DistributionSpec,
    /// Largest k reported; the remainder is the tail mass.
    #[arg(long, default_value_t = 20)]
    pub k_max: usize,
    #[arg(long)]
    pub samples: Option<u64>,
}

/// Defaults read from `--config`. Flags take precedence.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub cycles: Option<u64>,
    pub samples: Option<u64>,
    pub grid_points: Option<usize>,
    pub tolerance: Option<f64>,
}
