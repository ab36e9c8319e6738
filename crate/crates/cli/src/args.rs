use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cms_core::config::PRESET_NAMES;

#[derive(Debug, Parser)]
#[command(
    name = "cms",
    version = crate::VERSION,
    about = "Contractive Markov systems: invariant measures, coding and thermodynamic checks",
    long_about = "Every subcommand prints one JSON report on stdout. With --out, the report \
                  and any CSV artifacts are also written to that directory.\n\n\
                  Exit status: 0 on success, 2 on a configuration or validation failure \
                  (including failed checks in `report`), 1 on any other error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural and numerical validation of the system.
    Validate(ValidateArgs),
    /// Empirical average contraction rate.
    Rate(RateArgs),
    /// Particle approximation of the invariant measure.
    Invariant(InvariantArgs),
    /// One trajectory of the Markov chain, with ergodic averages.
    Chain(ChainArgs),
    /// Measure of a cylinder set under the generalized Markov measure.
    Cylinder(CylinderArgs),
    /// Codes sampled under the generalized Markov measure and their images under F.
    Code(CodeArgs),
    /// Mean energy E[u] over sampled codes.
    Energy(EnergyArgs),
    /// Entropy formula -Σ ∫ p log p dμ, optionally against the mean energy.
    Entropy(EntropyArgs),
    /// Empirical block entropies H_k / k.
    Blocks(BlocksArgs),
    /// Variational gaps h + E[u] of random Markov competitors.
    Gap(GapArgs),
    /// Distance between the image of the generalized Markov measure under F and μ.
    Pushforward(PushforwardArgs),
    /// Conditional-expectation identity binned by the recent past.
    Condexp(CondexpArgs),
    /// Transfer-operator oracle for systems with constant probabilities.
    Oracle(OracleArgs),
    /// All checks for a system as one pass/fail table.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Rate(_) => "rate",
            Command::Invariant(_) => "invariant",
            Command::Chain(_) => "chain",
            Command::Cylinder(_) => "cylinder",
            Command::Code(_) => "code",
            Command::Energy(_) => "energy",
            Command::Entropy(_) => "entropy",
            Command::Blocks(_) => "blocks",
            Command::Gap(_) => "gap",
            Command::Pushforward(_) => "pushforward",
            Command::Condexp(_) => "condexp",
            Command::Oracle(_) => "oracle",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// System configuration file (TOML, `schema = 1`).
    #[arg(long, value_name = "PATH", conflicts_with = "preset", required_unless_present = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in system instead of a file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    pub preset: Option<String>,
    /// Master seed; all random streams derive from it. Falls back to the
    /// configuration's `defaults.seed`, which is 0 unless set.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving the JSON report and CSV artifacts.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    /// Particles approximating μ.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Iterations of the adjoint operator; derived from the contraction rate when omitted.
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CodingArgs {
    /// Convergence tolerance of the coding map.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Largest number of past letters the coding map composes.
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Probe points per vertex.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Point pairs, stratified over distance scales.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InvariantArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Particles approximating μ (alias `--samples`); the ensemble is written to invariant.csv.
    #[arg(long, visible_alias = "samples")]
    pub particles: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Starting point as comma-separated coordinates; the first vertex's anchor by default.
    #[arg(long, value_name = "X1,X2,...")]
    pub x0: Option<String>,
    /// Observable expression in x1..xd whose time average is reported; repeatable.
    #[arg(long = "observable", value_name = "EXPR")]
    pub observables: Vec<String>,
    /// Independent chains behind each ergodic average.
    #[arg(long, default_value_t = 8)]
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CylinderMethod {
    /// Integrate the product of probabilities against the μ ensemble.
    Quadrature,
    /// Push the ensemble through every branch of the word.
    Exact,
    /// Frequency among codes sampled under the generalized Markov measure.
    Sampled,
}

#[derive(Debug, Args)]
pub struct CylinderArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Comma-separated edge ids, e.g. `3,1,4`.
    #[arg(long)]
    pub word: String,
    #[arg(long, value_enum, default_value_t = CylinderMethod::Quadrature)]
    pub method: CylinderMethod,
    /// Sampled codes for `--method sampled`.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CodeArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub coding: CodingArgs,
    /// Number of codes to sample and decode.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Past depth: letters σ_{-depth}, …, σ_0 are sampled.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Future letters σ_1, …, σ_future to include.
    #[arg(long, default_value_t = 0)]
    pub future: usize,
    /// Comma-separated depths for a convergence profile (written to profile.csv).
    #[arg(long, value_name = "D1,D2,...")]
    pub profile: Option<String>,
    /// Codes per depth in the convergence profile.
    #[arg(long, default_value_t = 10_000)]
    pub profile_samples: usize,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub coding: CodingArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Past depth of each sampled code.
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub coding: CodingArgs,
    /// Also estimate E[u] and report entropy + E[u].
    #[arg(long)]
    pub self_consistency: bool,
    /// Energy samples with --self-consistency.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BlocksArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Longest block length k.
    #[arg(long, default_value_t = 6)]
    pub max_len: usize,
    /// Sampled codes, each of length 2·max_len.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub coding: CodingArgs,
    /// Number of random competitors.
    #[arg(long, default_value_t = 50)]
    pub competitors: usize,
    /// Markov order of the competitors.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Energy samples per competitor.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PushforwardArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub coding: CodingArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub depth: usize,
}

#[derive(Debug, Args)]
pub struct CondexpArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Number of past letters defining a bin.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// Word length compared against the sampled codes.
    #[arg(long, default_value_t = 3)]
    pub length: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Total-variation tolerance of the power iteration.
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub system: SystemArgs,
}
