//! `mmpid`: convert multimodal annotations into interaction estimates.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mmpid::agreement::Metric;
use mmpid::dataset::Pairing;
use mmpid::pid::{Method, StepRule};
use mmpid::SolverConfig;

#[derive(Debug, Parser)]
#[command(
    name = "mmpid",
    version,
    about = "Partial information decomposition of multimodal annotations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert partial or counterfactual labels into R, U1, U2, S.
    Convert(ConvertArgs),
    /// Krippendorff's alpha and mean confidence per measure.
    Agreement(AgreementArgs),
    /// Decompose a joint distribution given as JSON.
    Pid(PidArgs),
    /// Compare the solver against the brute-force grid oracle.
    OracleCheck(OracleArgs),
    /// Sample a synthetic dataset from a gate.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelSchema {
    Partial,
    Counterfactual,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnySchema {
    Partial,
    Counterfactual,
    Decomposition,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PairingArg {
    Rotation,
    AllPairs,
}

impl From<PairingArg> for Pairing {
    fn from(p: PairingArg) -> Self {
        match p {
            PairingArg::Rotation => Pairing::Rotation,
            PairingArg::AllPairs => Pairing::AllPairs,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Nominal,
    Ordinal,
    Interval,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Nominal => Metric::Nominal,
            MetricArg::Ordinal => Metric::Ordinal,
            MetricArg::Interval => Metric::Interval,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    InteriorPoint,
    FrankWolfe,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StepRuleArg {
    LineSearch,
    Diminishing,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Certified optimality gap at which the solver stops (bits).
    #[arg(long, default_value_t = 1e-6)]
    tol_objective: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_feasibility: f64,
    #[arg(long = "max-iter", default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::InteriorPoint)]
    method: MethodArg,
    /// Step rule of the Frank-Wolfe method.
    #[arg(long, value_enum, default_value_t = StepRuleArg::LineSearch)]
    step_rule: StepRuleArg,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig, output::CliError> {
        let cfg = SolverConfig {
            tol_objective: self.tol_objective,
            tol_feasibility: self.tol_feasibility,
            max_iterations: self.max_iter,
            method: match self.method {
                MethodArg::InteriorPoint => Method::InteriorPoint,
                MethodArg::FrankWolfe => Method::FrankWolfe,
            },
            step_rule: match self.step_rule {
                StepRuleArg::LineSearch => StepRule::LineSearch,
                StepRuleArg::Diminishing => StepRule::Diminishing,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Annotation files (CSV, or JSON by `.json` extension).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    schema: LabelSchema,
    /// Label space as inline JSON or a path to a JSON file.
    #[arg(long)]
    label_space: String,
    #[arg(long, value_enum, default_value_t = PairingArg::Rotation)]
    pairing: PairingArg,
    /// Add-lambda smoothing of the empirical joint.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
    /// Agreement metric for the label measures.
    #[arg(long, value_enum, default_value_t = MetricArg::Nominal)]
    metric: MetricArg,
    #[command(flatten)]
    solver: SolverArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    schema: AnySchema,
    /// Required for partial and counterfactual files.
    #[arg(long)]
    label_space: Option<String>,
    /// Defaults to nominal for labels and interval for 0-5 ratings.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PidArgs {
    /// JSON file `{"size": n, "mass": [...]}`, row-major over (y1, y2, y).
    input: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Label-space sizes, used in turn (2 or 3).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid points per free parameter.
    #[arg(long, default_value_t = 2000)]
    resolution: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthFormat {
    /// `y1,y2,y,weight` rows.
    Triples,
    /// Partial-label annotation file.
    Partial,
    /// Counterfactual annotation file.
    Counterfactual,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// xor, and, or, copy, unique1, unique2 or noisy(<gate>,<eps>).
    #[arg(long)]
    gate: String,
    #[arg(long, default_value_t = 2)]
    size: usize,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SynthFormat::Triples)]
    format: SynthFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Convert(a) => commands::convert(a),
        Command::Agreement(a) => commands::agreement(a),
        Command::Pid(a) => commands::pid(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit)
        }
    }
}
