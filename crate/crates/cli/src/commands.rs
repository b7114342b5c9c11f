//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use nalgebra::DVector;
use serde::Serialize;

use sgs_core::data::{standardize, unstandardize_coefficients};
use sgs_core::io::{read_design, read_grouping, read_response};
use sgs_core::path::{fit_path, PathSettings};
use sgs_core::penalty::{build_penalty_spec, GroupSequence, PenaltySpec, SequenceOptions, VariableSequence};
use sgs_core::selection::{adaptively_scaled_sgs, cross_validate, scaled_sgs, NoiseEstimate};
use sgs_core::simulation::{
    run_fdr_experiment, run_selection_study, CorrelatedScenario, Grouping, ModelConfig, OrthogonalScenario,
    Scenario, Selector, Signal, SimulationReport,
};
use sgs_core::solver::{atos_fit, SgsSolution, SolverConfig};
use sgs_core::{GroupPartition, GroupedDataset, StandardizationRecord};

use crate::args::{
    CvArgs, DataArgs, FitArgs, GroupKindArg, ModelArg, NoiseArgs, NoiseMethod, PathArgs, PathGridArgs,
    PenaltiesArgs, PenaltyArgs, Preset, SelectorArg, SequenceKindArg, SimulateArgs, SolverArgs, VariableKindArg,
};
use crate::output::{file_digest, num, CsvTable, OutputDir};

/// A bad flag value; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(flag: &str, message: impl std::fmt::Display) -> anyhow::Error {
    UsageError(format!("invalid value for {flag}: {message}")).into()
}

fn require(ok: bool, flag: &str, message: impl std::fmt::Display) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(usage(flag, message))
    }
}

/// Inputs read by a command, with their digests for the manifest.
#[derive(Default)]
pub struct Inputs {
    pub digests: BTreeMap<String, String>,
}

impl Inputs {
    fn record(&mut self, path: &Path) -> Result<()> {
        self.digests.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }
}

/// Sizes for the inline grouping forms `evenSxM` and `unevenAtoBxM`.
fn inline_group_sizes(spec: &str) -> Option<std::result::Result<Vec<usize>, String>> {
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format!("{s:?} is not a count"));
    if let Some(rest) = spec.strip_prefix("uneven") {
        let (range, count) = rest.split_once('x')?;
        let (lo, hi) = range.split_once("to")?;
        return Some((|| {
            let (lo, hi, count) = (parse(lo)?, parse(hi)?, parse(count)?);
            if lo == 0 || hi < lo || count == 0 {
                return Err(format!("{spec:?} needs 1 <= A <= B and M >= 1"));
            }
            Ok((0..count).map(|g| lo + g % (hi - lo + 1)).collect())
        })());
    }
    if let Some(rest) = spec.strip_prefix("even") {
        let (size, count) = rest.split_once('x')?;
        return Some((|| {
            let (size, count) = (parse(size)?, parse(count)?);
            if size == 0 || count == 0 {
                return Err(format!("{spec:?} needs S >= 1 and M >= 1"));
            }
            Ok(vec![size; count])
        })());
    }
    None
}

fn load_groups(spec: &str, inputs: &mut Inputs) -> Result<GroupPartition> {
    match inline_group_sizes(spec) {
        Some(Ok(sizes)) => Ok(GroupPartition::from_sizes(&sizes)?),
        Some(Err(message)) => Err(usage("--groups", message)),
        None => {
            let path = Path::new(spec);
            if !path.exists() {
                return Err(usage("--groups", format!("{spec:?} is neither a grouping spec nor an existing file")));
            }
            inputs.record(path)?;
            Ok(read_grouping(path)?)
        }
    }
}

fn load_data(args: &DataArgs, inputs: &mut Inputs) -> Result<GroupedDataset> {
    for (flag, path) in [("--x", &args.x), ("--y", &args.y)] {
        require(path.exists(), flag, format!("file {} does not exist", path.display()))?;
    }
    let x = read_design(&args.x)?;
    inputs.record(&args.x)?;
    let y = read_response(&args.y)?;
    inputs.record(&args.y)?;
    let partition = load_groups(&args.groups, inputs)?;
    require(
        partition.num_variables() == x.ncols(),
        "--groups",
        format!("grouping covers {} variables but the design has {} columns", partition.num_variables(), x.ncols()),
    )?;
    require(
        y.len() == x.nrows(),
        "--y",
        format!("response has {} rows but the design has {}", y.len(), x.nrows()),
    )?;
    Ok(GroupedDataset::new(x, y, partition, args.family.into())?)
}

fn check_penalty(args: &PenaltyArgs) -> Result<()> {
    require((0.0..=1.0).contains(&args.alpha), "--alpha", format!("{} is outside [0, 1]", args.alpha))?;
    require(args.q_v > 0.0 && args.q_v < 1.0, "--q-v", format!("{} is outside (0, 1)", args.q_v))?;
    require(args.q_g > 0.0 && args.q_g < 1.0, "--q-g", format!("{} is outside (0, 1)", args.q_g))
}

fn solver_config(args: &SolverArgs) -> Result<SolverConfig> {
    require(args.tolerance > 0.0, "--tolerance", "must be positive")?;
    require(args.max_iterations > 0, "--max-iterations", "must be positive")?;
    require(args.eta > 0.0 && args.eta < 1.0, "--eta", "must lie in (0, 1)")?;
    if let Some(step) = args.step {
        require(step > 0.0 && step.is_finite(), "--step", "must be positive")?;
    }
    let config = SolverConfig {
        gamma0: args.initial_step(),
        eta: args.eta,
        tolerance: args.tolerance,
        max_iterations: args.max_iterations,
        fit_intercept: !args.no_intercept,
        ..SolverConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn path_settings(args: &PathGridArgs) -> Result<PathSettings> {
    require(args.path_length >= 2, "--path-length", "must be at least 2")?;
    require(args.min_ratio > 0.0 && args.min_ratio < 1.0, "--min-ratio", "must lie in (0, 1)")?;
    if let Some(l) = args.lambda_max {
        require(l > 0.0 && l.is_finite(), "--lambda-max", "must be positive")?;
    }
    Ok(PathSettings {
        path_length: args.path_length,
        min_ratio: args.min_ratio,
        lambda_max: args.lambda_max,
    })
}

/// Working data (standardized unless disabled) and the record to undo it.
fn prepare(data: &GroupedDataset, no_standardize: bool) -> Result<(GroupedDataset, Option<StandardizationRecord>)> {
    if no_standardize {
        Ok((data.clone(), None))
    } else {
        let (work, record) = standardize(data)?;
        Ok((work, Some(record)))
    }
}

fn template(data: &GroupedDataset, args: &PenaltyArgs, lambda: f64) -> Result<PenaltySpec> {
    Ok(build_penalty_spec(
        data.partition(),
        args.alpha,
        lambda,
        args.q_v,
        args.q_g,
        args.variable_kind.into(),
        args.group_kind.into(),
        &SequenceOptions {
            fixed_point: args.fixed_point,
            ..SequenceOptions::default()
        },
    )?)
}

/// The solution with coefficients and intercept on the original scale.
fn original_scale(solution: &SgsSolution, record: Option<&StandardizationRecord>) -> Result<SgsSolution> {
    let Some(record) = record else {
        return Ok(solution.clone());
    };
    let (beta, intercept) =
        unstandardize_coefficients(&DVector::from_column_slice(&solution.beta), solution.intercept, record)?;
    Ok(SgsSolution {
        beta: beta.iter().copied().collect(),
        intercept,
        ..solution.clone()
    })
}

fn coefficient_table(solution: &SgsSolution, partition: &GroupPartition) -> CsvTable {
    let mut table = CsvTable::new(&["variable", "group", "coefficient", "selected"]);
    for (i, b) in solution.beta.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            partition.group_of(i).to_string(),
            num(*b),
            (*b != 0.0).to_string(),
        ]);
    }
    table
}

#[derive(Serialize)]
struct PenaltySummary<'a> {
    alpha: f64,
    lambda: f64,
    q_v: f64,
    q_g: f64,
    variable_kind: VariableSequence,
    group_kind: GroupSequence,
    variable_weights: &'a [f64],
    group_weights: &'a [f64],
}

impl<'a> From<&'a PenaltySpec> for PenaltySummary<'a> {
    fn from(spec: &'a PenaltySpec) -> Self {
        Self {
            alpha: spec.alpha,
            lambda: spec.lambda,
            q_v: spec.q_v,
            q_g: spec.q_g,
            variable_kind: spec.variable_sequence_kind,
            group_kind: spec.group_sequence_kind,
            variable_weights: spec.v.values(),
            group_weights: spec.w.values(),
        }
    }
}

#[derive(Serialize)]
struct FitOutput<'a> {
    n: usize,
    p: usize,
    groups: usize,
    standardized: bool,
    penalty: PenaltySummary<'a>,
    solution: SgsSolution,
}

pub fn fit(args: &FitArgs, out: &mut OutputDir, inputs: &mut Inputs) -> Result<()> {
    check_penalty(&args.penalty)?;
    let config = solver_config(&args.solver)?;
    let data = load_data(&args.data, inputs)?;
    let lambda = args.lambda.unwrap_or(1.0 / data.n() as f64);
    require(lambda >= 0.0 && lambda.is_finite(), "--lambda", "must be non-negative")?;
    let (work, record) = prepare(&data, args.data.no_standardize)?;
    let spec = template(&work, &args.penalty, lambda)?;
    let solution = original_scale(&atos_fit(&work, &spec, &config)?, record.as_ref())?;
    out.write_csv("coefficients.csv", &coefficient_table(&solution, data.partition()))?;
    out.write_json(
        "fit.json",
        &FitOutput {
            n: data.n(),
            p: data.p(),
            groups: data.partition().num_groups(),
            standardized: record.is_some(),
            penalty: (&spec).into(),
            solution,
        },
    )
}

#[derive(Serialize)]
struct PathOutput<'a> {
    standardized: bool,
    penalty: PenaltySummary<'a>,
    lambdas: Vec<f64>,
    solutions: Vec<SgsSolution>,
}

fn path_table(lambdas: &[f64], solutions: &[SgsSolution]) -> CsvTable {
    let mut table = CsvTable::new(&[
        "lambda_index",
        "lambda",
        "selected_variables",
        "selected_groups",
        "iterations",
        "converged",
    ]);
    for (k, (l, s)) in lambdas.iter().zip(solutions).enumerate() {
        table.push(vec![
            k.to_string(),
            num(*l),
            s.selected_variables.len().to_string(),
            s.selected_groups.len().to_string(),
            s.iterations.to_string(),
            s.converged.to_string(),
        ]);
    }
    table
}

fn path_coefficients(solutions: &[SgsSolution]) -> CsvTable {
    let mut table = CsvTable::new(&["lambda_index", "variable", "coefficient"]);
    for (k, s) in solutions.iter().enumerate() {
        for (i, b) in s.beta.iter().enumerate() {
            table.push(vec![k.to_string(), i.to_string(), num(*b)]);
        }
    }
    table
}

pub fn path(args: &PathArgs, out: &mut OutputDir, inputs: &mut Inputs) -> Result<()> {
    check_penalty(&args.penalty)?;
    let config = solver_config(&args.solver)?;
    let settings = path_settings(&args.grid)?;
    let data = load_data(&args.data, inputs)?;
    let (work, record) = prepare(&data, args.data.no_standardize)?;
    let spec = template(&work, &args.penalty, 1.0 / work.n() as f64)?;
    let path = fit_path(&work, &spec, &settings, &config)?;
    let solutions = path
        .solutions
        .iter()
        .map(|s| original_scale(s, record.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    out.write_csv("path.csv", &path_table(&path.lambdas, &solutions))?;
    out.write_csv("path_coefficients.csv", &path_coefficients(&solutions))?;
    out.write_json(
        "path.json",
        &PathOutput {
            standardized: record.is_some(),
            penalty: (&spec).into(),
            lambdas: path.lambdas.clone(),
            solutions,
        },
    )
}

#[derive(Serialize)]
struct CvOutput<'a> {
    standardized: bool,
    folds: usize,
    penalty: PenaltySummary<'a>,
    lambdas: &'a [f64],
    fold_assignment: &'a [usize],
    fold_errors: &'a [Vec<f64>],
    mean_error: &'a [f64],
    std_error: &'a [f64],
    misclassification: Option<&'a [f64]>,
    lambda_min_index: usize,
    lambda_1se_index: usize,
    lambda_min: f64,
    lambda_1se: f64,
    chosen: SgsSolution,
}

pub fn cv(args: &CvArgs, seed: u64, out: &mut OutputDir, inputs: &mut Inputs) -> Result<()> {
    check_penalty(&args.penalty)?;
    let config = solver_config(&args.solver)?;
    let settings = path_settings(&args.grid)?;
    require(args.folds >= 2, "--folds", "must be at least 2")?;
    let data = load_data(&args.data, inputs)?;
    require(args.folds <= data.n(), "--folds", format!("{} folds but only {} rows", args.folds, data.n()))?;
    let (work, record) = prepare(&data, args.data.no_standardize)?;
    let spec = template(&work, &args.penalty, 1.0 / work.n() as f64)?;
    let result = cross_validate(&work, &spec, args.folds, &settings, &config, seed)?;
    let mut table = CsvTable::new(&["lambda_index", "lambda", "mean_error", "std_error", "misclassification"]);
    for k in 0..result.lambdas.len() {
        table.push(vec![
            k.to_string(),
            num(result.lambdas[k]),
            num(result.mean_error[k]),
            num(result.std_error[k]),
            result.misclassification.as_ref().map_or(String::new(), |m| num(m[k])),
        ]);
    }
    out.write_csv("cv.csv", &table)?;
    let chosen = original_scale(&result.chosen, record.as_ref())?;
    out.write_csv("coefficients.csv", &coefficient_table(&chosen, data.partition()))?;
    out.write_json(
        "cv.json",
        &CvOutput {
            standardized: record.is_some(),
            folds: args.folds,
            penalty: (&spec).into(),
            lambdas: &result.lambdas,
            fold_assignment: &result.fold_assignment,
            fold_errors: &result.fold_errors,
            mean_error: &result.mean_error,
            std_error: &result.std_error,
            misclassification: result.misclassification.as_deref(),
            lambda_min_index: result.lambda_min_index,
            lambda_1se_index: result.lambda_1se_index,
            lambda_min: result.lambdas[result.lambda_min_index],
            lambda_1se: result.lambdas[result.lambda_1se_index],
            chosen,
        },
    )
}

#[derive(Serialize)]
struct NoiseOutput {
    standardized: bool,
    method: NoiseMethod,
    estimate: NoiseEstimate,
    solution: SgsSolution,
}

pub fn noise_est(args: &NoiseArgs, out: &mut OutputDir, inputs: &mut Inputs) -> Result<()> {
    check_penalty(&args.penalty)?;
    let config = solver_config(&args.solver)?;
    require(args.max_rounds >= 1, "--max-rounds", "must be at least 1")?;
    let data = load_data(&args.data, inputs)?;
    require(
        matches!(data.family(), sgs_core::Family::Gaussian),
        "--family",
        "noise estimation needs a gaussian response",
    )?;
    let (work, record) = prepare(&data, args.data.no_standardize)?;
    let (estimate, solution) = match args.method {
        NoiseMethod::Scaled => {
            let spec = template(&work, &args.penalty, 1.0 / work.n() as f64)?;
            scaled_sgs(&work, &spec, &config, args.max_rounds)?
        }
        NoiseMethod::AsSgs => adaptively_scaled_sgs(
            &work,
            args.penalty.alpha,
            args.penalty.q_v,
            args.penalty.q_g,
            &SequenceOptions {
                fixed_point: args.penalty.fixed_point,
                ..SequenceOptions::default()
            },
            &config,
            args.max_rounds,
        )?,
    };
    let solution = original_scale(&solution, record.as_ref())?;
    out.write_csv("coefficients.csv", &coefficient_table(&solution, data.partition()))?;
    out.write_json(
        "noise.json",
        &NoiseOutput {
            standardized: record.is_some(),
            method: args.method,
            estimate,
            solution,
        },
    )
}

#[derive(Serialize)]
struct PenaltiesOutput<'a> {
    kind: SequenceKindArg,
    p: usize,
    group_sizes: Vec<usize>,
    scale: f64,
    penalty: PenaltySummary<'a>,
}

pub fn penalties(args: &PenaltiesArgs, out: &mut OutputDir, inputs: &mut Inputs) -> Result<()> {
    require((0.0..=1.0).contains(&args.alpha), "--alpha", format!("{} is outside [0, 1]", args.alpha))?;
    let q_v = args.q_v.unwrap_or(args.q);
    let q_g = args.q_g.unwrap_or(args.q);
    for (flag, q) in [("--q", args.q), ("--q-v", q_v), ("--q-g", q_g)] {
        require(q > 0.0 && q < 1.0, flag, format!("{q} is outside (0, 1)"))?;
    }
    require(args.scale > 0.0 && args.scale.is_finite(), "--scale", "must be positive")?;
    let partition = load_groups(&args.groups, inputs)?;
    if let Some(p) = args.p {
        require(
            p == partition.num_variables(),
            "--p",
            format!("{p} does not match the {} variables of --groups", partition.num_variables()),
        )?;
    }
    let (variable_kind, group_kind) = match args.kind {
        SequenceKindArg::Bh => (VariableKindArg::Bh, args.group_kind),
        SequenceKindArg::Vmax => (VariableKindArg::Vmax, args.group_kind),
        SequenceKindArg::Vmean => (VariableKindArg::Vmean, args.group_kind),
        SequenceKindArg::GslopeMax => (args.variable_kind, GroupKindArg::GslopeMax),
        SequenceKindArg::GslopeMean => (args.variable_kind, GroupKindArg::GslopeMean),
        SequenceKindArg::Gmax => (args.variable_kind, GroupKindArg::Gmax),
        SequenceKindArg::Gmean => (args.variable_kind, GroupKindArg::Gmean),
    };
    let spec = build_penalty_spec(
        &partition,
        args.alpha,
        1.0,
        q_v,
        q_g,
        variable_kind.into(),
        group_kind.into(),
        &SequenceOptions {
            scale: args.scale,
            fixed_point: args.fixed_point,
            ..SequenceOptions::default()
        },
    )?;
    let values = match args.kind {
        SequenceKindArg::Bh | SequenceKindArg::Vmax | SequenceKindArg::Vmean => spec.v.values(),
        _ => spec.w.values(),
    };
    let mut table = CsvTable::new(&["index", "value"]);
    for (i, v) in values.iter().enumerate() {
        table.push(vec![(i + 1).to_string(), num(*v)]);
    }
    out.write_csv("penalties.csv", &table)?;
    out.write_json(
        "penalties.json",
        &PenaltiesOutput {
            kind: args.kind,
            p: partition.num_variables(),
            group_sizes: partition.sizes(),
            scale: args.scale,
            penalty: (&spec).into(),
        },
    )
}

fn ortho_scenario(args: &SimulateArgs, seed: u64) -> Result<OrthogonalScenario> {
    let p = args.p.unwrap_or(1000);
    let grouping = match args.preset {
        Preset::OrthoEven => {
            require(p % 5 == 0 && p > 0, "--p", format!("{p} is not a positive multiple of the group size 5"))?;
            Grouping::Even {
                group_count: p / 5,
                size: 5,
            }
        }
        _ => {
            require(p % 25 == 0 && p > 0, "--p", format!("{p} is not a positive multiple of 25 (sizes 3 to 7)"))?;
            Grouping::UnevenBands {
                sizes: (3..=7).collect(),
                groups_per_size: p / 25,
            }
        }
    };
    Ok(OrthogonalScenario {
        p,
        grouping,
        group_sparsity: 1.0,
        within_active_fraction: 0.6,
        seed,
    })
}

/// Sizes 5 to 75 spread evenly over 25 groups.
fn large_group_sizes() -> Vec<usize> {
    (0..25).map(|k| 5 + (70.0 * k as f64 / 24.0).round() as usize).collect()
}

fn correlated_scenario(args: &SimulateArgs, seed: u64) -> Result<CorrelatedScenario> {
    require(args.p.is_none(), "--p", "only the orthogonal presets take a variable count")?;
    require((0.0..1.0).contains(&args.rho), "--rho", format!("{} is outside [0, 1)", args.rho))?;
    let banded: Vec<usize> = (0..160).map(|g| 3 + g % 5).collect();
    let (sizes, signal, default_sparsity, fraction) = match args.preset {
        Preset::CorrFixed => (banded, Signal::Fixed(5.0), 0.92, 0.6),
        Preset::CorrRandom => (banded, Signal::RandomNormal(5.0), 0.80, 0.6),
        Preset::Null => (banded, Signal::Fixed(5.0), 1.0, 0.6),
        Preset::CorrLargegroups => (large_group_sizes(), Signal::Fixed(5.0), 1.0 - 4.0 / 25.0, 0.4),
        Preset::OrthoEven | Preset::OrthoUneven => unreachable!("orthogonal presets are handled separately"),
    };
    let group_sparsity = match (args.preset, args.group_sparsity) {
        (Preset::Null, Some(gs)) => {
            require(gs == 1.0, "--group-sparsity", "the null preset has no active groups")?;
            gs
        }
        (_, Some(gs)) => {
            require((0.0..=1.0).contains(&gs), "--group-sparsity", format!("{gs} is outside [0, 1]"))?;
            gs
        }
        (_, None) => default_sparsity,
    };
    let p: usize = sizes.iter().sum();
    let n = args.n.unwrap_or(p / 4);
    require(n >= 2, "--n", "must be at least 2")?;
    Ok(CorrelatedScenario {
        n,
        group_sizes: sizes,
        rho: args.rho,
        signal,
        snr: 6.0,
        group_sparsity,
        within_active_fraction: fraction,
        seed,
    })
}

fn simulation_models(args: &SimulateArgs, solver: &SolverConfig) -> Result<Vec<ModelConfig>> {
    require((0.0..=1.0).contains(&args.alpha), "--alpha", format!("{} is outside [0, 1]", args.alpha))?;
    require(args.model_q > 0.0 && args.model_q < 1.0, "--model-q", "must lie in (0, 1)")?;
    require(!args.models.is_empty(), "--models", "at least one model is needed")?;
    let selector = match args.selector {
        SelectorArg::Cv => {
            require(args.folds >= 2, "--folds", "must be at least 2")?;
            Selector::CrossValidation {
                folds: args.folds,
                path: PathSettings::default(),
            }
        }
        SelectorArg::Scaled => Selector::Scaled { max_rounds: 100 },
        SelectorArg::AsSgs => Selector::AdaptivelyScaled { max_rounds: 100 },
        SelectorArg::Fixed => Selector::Fixed { scale: 1.0 },
    };
    let variable_kind: VariableSequence = args.variable_kind.unwrap_or(VariableKindArg::Vmean).into();
    let group_kind: GroupSequence = args.group_kind.unwrap_or(GroupKindArg::GslopeMean).into();
    let mut seen = std::collections::BTreeSet::new();
    Ok(args
        .models
        .iter()
        .filter(|m| seen.insert(**m))
        .map(|m| {
            let (name, alpha, vk, gk) = match m {
                ModelArg::Sgs => ("sgs", args.alpha, variable_kind, group_kind),
                ModelArg::Slope => ("slope", 1.0, VariableSequence::Bh, GroupSequence::GSlopeMean),
                ModelArg::Gslope => ("gslope", 0.0, VariableSequence::Bh, GroupSequence::GSlopeMean),
            };
            ModelConfig {
                name: name.into(),
                alpha,
                q_v: args.model_q,
                q_g: args.model_q,
                variable_kind: vk,
                group_kind: gk,
                selector: selector.clone(),
                solver: solver.clone(),
                standardize: true,
            }
        })
        .collect())
}

fn report_tables(report: &SimulationReport) -> (CsvTable, CsvTable) {
    let mut summary = CsvTable::new(&[
        "cell",
        "label",
        "model",
        "group_sparsity",
        "variable_sparsity",
        "q_v",
        "q_g",
        "replicates",
        "failures",
        "metric",
        "mean",
        "std_error",
    ]);
    for (c, cell) in report.cells.iter().enumerate() {
        for (metric, s) in &cell.metrics {
            summary.push(vec![
                c.to_string(),
                cell.label.clone(),
                cell.model.clone(),
                num(cell.group_sparsity),
                num(cell.variable_sparsity),
                num(cell.q_v),
                num(cell.q_g),
                cell.replicates.to_string(),
                cell.failures.to_string(),
                metric.clone(),
                num(s.mean),
                num(s.std_error),
            ]);
        }
    }
    let mut replicates = CsvTable::new(&["cell", "label", "model", "replicate", "seed", "metric", "value"]);
    for record in &report.records {
        let cell = &report.cells[record.cell];
        if let Some(m) = &record.metrics {
            for (metric, value) in sgs_core::simulation::metric_values(m) {
                replicates.push(vec![
                    record.cell.to_string(),
                    cell.label.clone(),
                    cell.model.clone(),
                    record.replicate.to_string(),
                    record.seed.to_string(),
                    metric.to_string(),
                    num(value),
                ]);
            }
        }
    }
    (summary, replicates)
}

pub fn simulate(args: &SimulateArgs, seed: u64, out: &mut OutputDir) -> Result<()> {
    require(args.replicates >= 1, "--replicates", "must be at least 1")?;
    let mut solver = solver_config(&args.solver)?;
    let report = match args.preset {
        Preset::OrthoEven | Preset::OrthoUneven => {
            require(!args.grid.is_empty(), "--grid", "at least one sparsity level is needed")?;
            for &gs in &args.grid {
                require((0.0..=1.0).contains(&gs), "--grid", format!("{gs} is outside [0, 1]"))?;
            }
            require(!args.q.is_empty(), "--q", "at least one FDR level is needed")?;
            for &q in &args.q {
                require(q > 0.0 && q < 1.0, "--q", format!("{q} is outside (0, 1)"))?;
            }
            let scenario = ortho_scenario(args, seed)?;
            run_fdr_experiment(
                &scenario,
                &args.grid,
                &args.q,
                args.variable_kind.unwrap_or(VariableKindArg::Vmax).into(),
                args.group_kind.unwrap_or(GroupKindArg::Gmax).into(),
                args.replicates,
                seed,
            )?
        }
        _ => {
            let scenario = Scenario::Correlated(correlated_scenario(args, seed)?);
            solver.fit_intercept = !args.solver.no_intercept;
            let models = simulation_models(args, &solver)?;
            run_selection_study(&scenario, &models, args.replicates, seed)?
        }
    };
    let (summary, replicates) = report_tables(&report);
    out.write_csv("summary.csv", &summary)?;
    out.write_csv("replicates.csv", &replicates)?;
    out.write_json("report.json", &report)
}
