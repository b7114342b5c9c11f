//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sgs_core::penalty::{GroupSequence, VariableSequence};
use sgs_core::solver::InitialStep;
use sgs_core::Family;

#[derive(Debug, Parser, Serialize)]
#[command(name = "sgs", version, about = "Sparse-group SLOPE fitting, model selection and simulation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct GlobalArgs {
    /// Output directory (created if missing).
    #[arg(long, global = true, env = "SGS_OUT_DIR", default_value = "sgs-out")]
    pub out: PathBuf,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Fit at one lambda.
    Fit(FitArgs),
    /// Fit a warm-started path from the null-model lambda down.
    Path(PathArgs),
    /// Choose lambda by K-fold cross-validation with the one-standard-error rule.
    Cv(CvArgs),
    /// Choose lambda from an estimate of the noise level.
    NoiseEst(NoiseArgs),
    /// Print a penalty weight sequence.
    Penalties(PenaltiesArgs),
    /// Run a Monte-Carlo experiment from a preset scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binomial => Family::Binomial,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum VariableKindArg {
    Bh,
    Vmax,
    Vmean,
}

impl From<VariableKindArg> for VariableSequence {
    fn from(k: VariableKindArg) -> Self {
        match k {
            VariableKindArg::Bh => VariableSequence::Bh,
            VariableKindArg::Vmax => VariableSequence::VMax,
            VariableKindArg::Vmean => VariableSequence::VMean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKindArg {
    GslopeMax,
    GslopeMean,
    Gmax,
    Gmean,
}

impl From<GroupKindArg> for GroupSequence {
    fn from(k: GroupKindArg) -> Self {
        match k {
            GroupKindArg::GslopeMax => GroupSequence::GSlopeMax,
            GroupKindArg::GslopeMean => GroupSequence::GSlopeMean,
            GroupKindArg::Gmax => GroupSequence::GMax,
            GroupKindArg::Gmean => GroupSequence::GMean,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialStepArg {
    Lipschitz,
    Probe,
}

/// Input files.
#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Design matrix CSV (rows are observations).
    #[arg(long)]
    pub x: PathBuf,
    /// Response CSV with one column.
    #[arg(long)]
    pub y: PathBuf,
    /// Grouping: a `variable_index,group_id` CSV, or `evenSxM` / `unevenAtoBxM`.
    #[arg(long)]
    pub groups: String,
    #[arg(long, value_enum, default_value_t = FamilyArg::Gaussian)]
    pub family: FamilyArg,
    /// Fit on the raw columns instead of centred unit-norm ones.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct PenaltyArgs {
    /// Mix between the variable (alpha) and group (1 - alpha) penalties.
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    /// Variable FDR level.
    #[arg(long, default_value_t = 0.1)]
    pub q_v: f64,
    /// Group FDR level.
    #[arg(long, default_value_t = 0.1)]
    pub q_g: f64,
    #[arg(long, value_enum, default_value_t = VariableKindArg::Vmean)]
    pub variable_kind: VariableKindArg,
    #[arg(long, value_enum, default_value_t = GroupKindArg::GslopeMean)]
    pub group_kind: GroupKindArg,
    /// Iterate the coupled variable/group sequences to a fixed point.
    #[arg(long)]
    pub fixed_point: bool,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    /// Backtracking shrink factor.
    #[arg(long, default_value_t = 0.7)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = InitialStepArg::Lipschitz)]
    pub initial_step: InitialStepArg,
    /// Fixed first step size; overrides --initial-step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Fit without an intercept.
    #[arg(long)]
    pub no_intercept: bool,
}

impl SolverArgs {
    pub fn initial_step(&self) -> InitialStep {
        match (self.step, self.initial_step) {
            (Some(g), _) => InitialStep::Fixed(g),
            (None, InitialStepArg::Lipschitz) => InitialStep::Lipschitz,
            (None, InitialStepArg::Probe) => InitialStep::Probe,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PathGridArgs {
    #[arg(long, default_value_t = 20)]
    pub path_length: usize,
    /// Smallest lambda as a fraction of the largest.
    #[arg(long, default_value_t = 0.1)]
    pub min_ratio: f64,
    /// Start the path here instead of at the computed null-model lambda.
    #[arg(long)]
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Objective multiplier; defaults to 1/n.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: PathGridArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub grid: PathGridArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMethod {
    /// Rescale lambda by the residual noise estimate, keeping the sequences.
    Scaled,
    /// Regenerate vMax/gMax at the residual variance until the support settles.
    AsSgs,
}

#[derive(Debug, Args, Serialize)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub penalty: PenaltyArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = NoiseMethod::Scaled)]
    pub method: NoiseMethod,
    #[arg(long, default_value_t = 100)]
    pub max_rounds: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKindArg {
    Bh,
    Vmax,
    Vmean,
    GslopeMax,
    GslopeMean,
    Gmax,
    Gmean,
}

#[derive(Debug, Args, Serialize)]
pub struct PenaltiesArgs {
    /// Sequence to print.
    #[arg(long, value_enum)]
    pub kind: SequenceKindArg,
    /// Number of variables; checked against --groups when both are given.
    #[arg(long)]
    pub p: Option<usize>,
    /// Grouping: `evenSxM`, `unevenAtoBxM` or a `variable_index,group_id` CSV.
    #[arg(long)]
    pub groups: String,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    /// Sets both FDR levels.
    #[arg(long, default_value_t = 0.1)]
    pub q: f64,
    #[arg(long)]
    pub q_v: Option<f64>,
    #[arg(long)]
    pub q_g: Option<f64>,
    /// Variable sequence paired with a group --kind.
    #[arg(long, value_enum, default_value_t = VariableKindArg::Vmean)]
    pub variable_kind: VariableKindArg,
    /// Group sequence paired with a variable --kind.
    #[arg(long, value_enum, default_value_t = GroupKindArg::GslopeMean)]
    pub group_kind: GroupKindArg,
    /// Noise scale of the lambda-scaled sequences.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub fixed_point: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    OrthoEven,
    OrthoUneven,
    CorrFixed,
    CorrRandom,
    CorrLargegroups,
    Null,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorArg {
    Cv,
    Scaled,
    AsSgs,
    Fixed,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Sgs,
    Slope,
    Gslope,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Group sparsity levels (orthogonal presets).
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.9, 0.75, 0.59])]
    pub grid: Vec<f64>,
    /// FDR levels, used for both q_v and q_g (orthogonal presets).
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2])]
    pub q: Vec<f64>,
    /// Variable sequence; vmax for orthogonal presets, vmean otherwise.
    #[arg(long, value_enum)]
    pub variable_kind: Option<VariableKindArg>,
    /// Group sequence; gmax for orthogonal presets, gslope-mean otherwise.
    #[arg(long, value_enum)]
    pub group_kind: Option<GroupKindArg>,
    /// Variables in the orthogonal presets.
    #[arg(long)]
    pub p: Option<usize>,
    /// Rows in the correlated presets.
    #[arg(long)]
    pub n: Option<usize>,
    /// Within-group correlation in the correlated presets.
    #[arg(long, default_value_t = 0.3)]
    pub rho: f64,
    /// Group sparsity in the correlated presets (preset default otherwise).
    #[arg(long)]
    pub group_sparsity: Option<f64>,
    /// Models compared in the correlated presets.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModelArg::Sgs])]
    pub models: Vec<ModelArg>,
    #[arg(long, value_enum, default_value_t = SelectorArg::Cv)]
    pub selector: SelectorArg,
    /// Mixing parameter of the SGS model in the correlated presets.
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    /// FDR level of the models in the correlated presets.
    #[arg(long, default_value_t = 0.1)]
    pub model_q: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}
