use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::io::Format;

#[derive(Debug, Parser)]
#[command(
    name = "classgain",
    version,
    about = "Blind signal classification by maximizing classification gain"
)]
pub struct Cli {
    /// Base seed; every command is deterministic given it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic signal and its truth labels from a mixture spec.
    Gen(GenArgs),
    /// Classify a signal (CSV or PGM).
    Classify(ClassifyArgs),
    /// Score estimated labels against truth labels.
    Eval(EvalArgs),
    /// Run one of the built-in two-class experiments over many seeds.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Mixture spec file (TOML).
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Signal file format; defaults to PGM for grids and CSV otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Relax)]
    pub method: MethodArg,
    /// Solver restarts (relaxation only).
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Rounding trials; the lowest-objective draw is kept.
    #[arg(long = "round-k", default_value_t = 32)]
    pub round_k: usize,
    /// Typicality tolerance on class mass (give all three or none).
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Typicality tolerance on the first moment, in signal units.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Typicality tolerance on the second moment, in squared signal units.
    #[arg(long)]
    pub eps3: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Signal file: CSV (one value per line) or binary PGM.
    #[arg(long)]
    pub input: PathBuf,
    /// Number of classes J.
    #[arg(long)]
    pub classes: usize,
    /// Optional truth labels; adds an evaluation section to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Label file format; defaults to the input's format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated labels (1-based CSV or label PGM).
    #[arg(long)]
    pub input: PathBuf,
    /// Truth labels (1-based CSV or label PGM).
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub classes: usize,
    /// Also write the result to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[arg(value_enum)]
    pub case: CaseArg,
    /// A seed count (seeds start at --seed) or a comma-separated list.
    #[arg(long, default_value = "20")]
    pub seeds: String,
    /// Also write the full report to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Relax,
    Kmeans,
    Em,
    Brute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    One,
    Two,
    Three,
    Twodim,
}
