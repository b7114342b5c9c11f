//! Synthetic grouped regression problems and Monte-Carlo experiments.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, unstandardize_coefficients, Family, GroupPartition, GroupedDataset};
use crate::error::{Result, SgsError};
use crate::metrics::{compute_metrics_for, SelectionMetrics};
use crate::path::PathSettings;
use crate::penalty::{build_penalty_spec, GroupSequence, SequenceOptions, VariableSequence};
use crate::rng::{child_rng, replicate_seed, Stream};
use crate::selection::{adaptively_scaled_sgs, cross_validate, scaled_sgs};
use crate::solver::{atos_fit, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Even { group_count: usize, size: usize },
    /// `groups_per_size` groups of every listed size, sizes interleaved.
    UnevenBands { sizes: Vec<usize>, groups_per_size: usize },
}

impl Grouping {
    pub fn sizes(&self) -> Vec<usize> {
        match self {
            Grouping::Even { group_count, size } => vec![*size; *group_count],
            Grouping::UnevenBands { sizes, groups_per_size } => {
                (0..*groups_per_size).flat_map(|_| sizes.iter().copied()).collect()
            }
        }
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        GroupPartition::from_sizes(&self.sizes())
    }
}

fn check_proportion(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SgsError::InconsistentScenario(format!("{name} must lie in [0, 1], got {value}")))
    }
}

/// Number of active variables in an active group of `size`.
pub fn active_in_group(fraction: f64, size: usize) -> usize {
    (((fraction * size as f64) + 1e-9).floor() as usize).clamp(1, size)
}

/// Picks `count` active groups at random, spread evenly over the distinct
/// group sizes (round-robin across size bands, smallest size first).
fn choose_active_groups(partition: &GroupPartition, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut bands: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for g in 0..partition.num_groups() {
        bands.entry(partition.size(g)).or_default().push(g);
    }
    let mut queues: Vec<Vec<usize>> = bands
        .into_values()
        .map(|mut members| {
            members.shuffle(rng);
            members.reverse();
            members
        })
        .collect();
    let mut chosen = Vec::with_capacity(count);
    while chosen.len() < count {
        let before = chosen.len();
        for q in queues.iter_mut() {
            if chosen.len() == count {
                break;
            }
            if let Some(g) = q.pop() {
                chosen.push(g);
            }
        }
        if chosen.len() == before {
            break;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Active variable set: the chosen groups, each with `active_in_group` members.
fn choose_active_variables(
    partition: &GroupPartition,
    group_sparsity: f64,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let m = partition.num_groups();
    let count = ((1.0 - group_sparsity) * m as f64).round() as usize;
    let groups = choose_active_groups(partition, count, rng);
    let mut active = Vec::new();
    for g in groups {
        let mut members = partition.members(g).to_vec();
        members.shuffle(rng);
        members.truncate(active_in_group(fraction, members.len()));
        active.extend(members);
    }
    active.sort_unstable();
    active
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalScenario {
    pub p: usize,
    pub grouping: Grouping,
    /// Proportion of inactive groups.
    pub group_sparsity: f64,
    pub within_active_fraction: f64,
    pub seed: u64,
}

impl OrthogonalScenario {
    pub fn validate(&self) -> Result<GroupPartition> {
        check_proportion("group sparsity", self.group_sparsity)?;
        check_proportion("within-active fraction", self.within_active_fraction)?;
        let partition = self.grouping.partition()?;
        if partition.num_variables() != self.p {
            return Err(SgsError::InconsistentScenario(format!(
                "grouping covers {} variables but p = {}",
                partition.num_variables(),
                self.p
            )));
        }
        Ok(partition)
    }

    /// Proportion of inactive variables implied by the group settings.
    pub fn variable_sparsity(&self) -> Result<f64> {
        let partition = self.validate()?;
        Ok(1.0 - true_counts(&partition, self.group_sparsity, self.within_active_fraction).0 as f64 / self.p as f64)
    }
}

/// `(active variables, active groups)` for the given settings.
pub fn true_counts(partition: &GroupPartition, group_sparsity: f64, fraction: f64) -> (usize, usize) {
    let mut rng = child_rng(0, Stream::Scenario, 0);
    let active = choose_active_variables(partition, group_sparsity, fraction, &mut rng);
    let m1 = ((1.0 - group_sparsity) * partition.num_groups() as f64).round() as usize;
    (active.len(), m1)
}

/// Identity design and `y = beta + noise`, with `beta_i = 5 delta_i sqrt(2 log p)`.
pub fn generate_orthogonal(scenario: &OrthogonalScenario) -> Result<(GroupedDataset, Vec<f64>)> {
    let partition = scenario.validate()?;
    let p = scenario.p;
    let mut rng = child_rng(scenario.seed, Stream::Scenario, 0);
    let active = choose_active_variables(&partition, scenario.group_sparsity, scenario.within_active_fraction, &mut rng);
    let amplitude = 5.0 * (2.0 * (p as f64).ln()).sqrt();
    let mut beta = vec![0.0; p];
    for &i in &active {
        let delta: f64 = rng.sample(StandardNormal);
        beta[i] = amplitude * delta;
    }
    let y = DVector::from_iterator(p, beta.iter().map(|&b| b + rng.sample::<f64, _>(StandardNormal)));
    let data = GroupedDataset::new(DMatrix::identity(p, p), y, partition, Family::Gaussian)?;
    Ok((data, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Signal {
    Fixed(f64),
    RandomNormal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedScenario {
    pub n: usize,
    pub group_sizes: Vec<usize>,
    pub rho: f64,
    pub signal: Signal,
    pub snr: f64,
    pub group_sparsity: f64,
    pub within_active_fraction: f64,
    pub seed: u64,
}

impl CorrelatedScenario {
    pub fn p(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<GroupPartition> {
        check_proportion("group sparsity", self.group_sparsity)?;
        check_proportion("within-active fraction", self.within_active_fraction)?;
        if !(0.0..1.0).contains(&self.rho) {
            return Err(SgsError::InconsistentScenario(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0) {
            return Err(SgsError::InconsistentScenario(format!("snr must be positive, got {}", self.snr)));
        }
        if self.n < 2 {
            return Err(SgsError::InconsistentScenario("need at least two rows".into()));
        }
        GroupPartition::from_sizes(&self.group_sizes)
    }
}

fn sample_variance(v: &DVector<f64>) -> f64 {
    let mean = v.mean();
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Block-correlated normal design (`sqrt(rho)` shared plus `sqrt(1 - rho)`
/// own noise per group) and `y = X beta + sigma eps` at the requested SNR.
pub fn generate_correlated(scenario: &CorrelatedScenario) -> Result<(GroupedDataset, Vec<f64>)> {
    let partition = scenario.validate()?;
    let (n, p) = (scenario.n, scenario.p());
    let mut rng = child_rng(scenario.seed, Stream::Scenario, 0);
    let active = choose_active_variables(&partition, scenario.group_sparsity, scenario.within_active_fraction, &mut rng);
    let mut beta = vec![0.0; p];
    for &i in &active {
        beta[i] = match scenario.signal {
            Signal::Fixed(value) => value,
            Signal::RandomNormal(sd) => sd * rng.sample::<f64, _>(StandardNormal),
        };
    }
    let (shared_w, own_w) = (scenario.rho.sqrt(), (1.0 - scenario.rho).sqrt());
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for members in partition.groups() {
            let shared: f64 = rng.sample(StandardNormal);
            for &j in members {
                x[(i, j)] = shared_w * shared + own_w * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    let signal = &x * DVector::from_column_slice(&beta);
    let var = sample_variance(&signal);
    let sigma = if var > 0.0 { (var / scenario.snr).sqrt() } else { 1.0 };
    let y = DVector::from_iterator(n, signal.iter().map(|s| s + sigma * rng.sample::<f64, _>(StandardNormal)));
    let data = GroupedDataset::new(x, y, partition, Family::Gaussian)?;
    Ok((data, beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    Orthogonal(OrthogonalScenario),
    Correlated(CorrelatedScenario),
}

impl Scenario {
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            Scenario::Orthogonal(s) => Scenario::Orthogonal(OrthogonalScenario { seed, ..s.clone() }),
            Scenario::Correlated(s) => Scenario::Correlated(CorrelatedScenario { seed, ..s.clone() }),
        }
    }

    pub fn with_group_sparsity(&self, group_sparsity: f64) -> Self {
        match self {
            Scenario::Orthogonal(s) => Scenario::Orthogonal(OrthogonalScenario { group_sparsity, ..s.clone() }),
            Scenario::Correlated(s) => Scenario::Correlated(CorrelatedScenario { group_sparsity, ..s.clone() }),
        }
    }

    pub fn generate(&self) -> Result<(GroupedDataset, Vec<f64>)> {
        match self {
            Scenario::Orthogonal(s) => generate_orthogonal(s),
            Scenario::Correlated(s) => generate_correlated(s),
        }
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        match self {
            Scenario::Orthogonal(s) => s.validate(),
            Scenario::Correlated(s) => s.validate(),
        }
    }

    fn sparsity(&self) -> (f64, f64) {
        match self {
            Scenario::Orthogonal(s) => (s.group_sparsity, s.within_active_fraction),
            Scenario::Correlated(s) => (s.group_sparsity, s.within_active_fraction),
        }
    }
}

/// How a model picks its lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Selector {
    /// Objective multiplier `scale / n`.
    Fixed { scale: f64 },
    CrossValidation { folds: usize, path: PathSettings },
    Scaled { max_rounds: usize },
    AdaptivelyScaled { max_rounds: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub alpha: f64,
    pub q_v: f64,
    pub q_g: f64,
    pub variable_kind: VariableSequence,
    pub group_kind: GroupSequence,
    pub selector: Selector,
    pub solver: SolverConfig,
    /// Center and scale the columns before fitting.
    pub standardize: bool,
}

impl ModelConfig {
    /// Fits the model and returns coefficients on the original scale.
    pub fn fit(&self, data: &GroupedDataset, seed: u64) -> Result<Vec<f64>> {
        let (work, record) = if self.standardize {
            let (d, r) = standardize(data)?;
            (d, Some(r))
        } else {
            (data.clone(), None)
        };
        let n = work.n() as f64;
        let template = build_penalty_spec(
            work.partition(),
            self.alpha,
            1.0 / n,
            self.q_v,
            self.q_g,
            self.variable_kind,
            self.group_kind,
            &SequenceOptions::default(),
        )?;
        let solution = match &self.selector {
            Selector::Fixed { scale } => atos_fit(&work, &template.with_lambda(scale / n), &self.solver)?,
            Selector::CrossValidation { folds, path } => {
                cross_validate(&work, &template, *folds, path, &self.solver, seed)?.chosen
            }
            Selector::Scaled { max_rounds } => scaled_sgs(&work, &template, &self.solver, *max_rounds)?.1,
            Selector::AdaptivelyScaled { max_rounds } => {
                adaptively_scaled_sgs(
                    &work,
                    self.alpha,
                    self.q_v,
                    self.q_g,
                    &SequenceOptions::default(),
                    &self.solver,
                    *max_rounds,
                )?
                .1
            }
        };
        Ok(match record {
            Some(r) => {
                let (beta, _) = unstandardize_coefficients(&DVector::from_column_slice(&solution.beta), solution.intercept, &r)?;
                beta.iter().copied().collect()
            }
            None => solution.beta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std_error: f64,
}

impl MetricSummary {
    /// Mean and `sd / sqrt(count)`; the standard error is zero for one value.
    pub fn from_values(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let std_error = if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    pub seed: u64,
    pub metrics: Option<SelectionMetrics>,
    pub error: Option<String>,
}

/// One configuration of an experiment: a model, and for FDR experiments
/// a sparsity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub label: String,
    pub model: String,
    pub group_sparsity: f64,
    pub variable_sparsity: f64,
    pub q_v: f64,
    pub q_g: f64,
    /// Numbers of truly null variables and groups.
    pub null_variables: usize,
    pub null_groups: usize,
    pub replicates: usize,
    pub failures: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: Scenario,
    pub replicate_seeds: Vec<u64>,
    pub cells: Vec<CellSummary>,
    pub records: Vec<ReplicateRecord>,
}

/// Named per-replicate quantities that get aggregated.
pub fn metric_values(m: &SelectionMetrics) -> Vec<(&'static str, f64)> {
    vec![
        ("variable_fdr", m.variable.fdr),
        ("group_fdr", m.group.fdr),
        ("variable_sensitivity", m.variable.sensitivity),
        ("group_sensitivity", m.group.sensitivity),
        ("variable_f1", m.variable.f1),
        ("group_f1", m.group.f1),
        ("variable_accuracy", m.variable.accuracy),
        ("group_accuracy", m.group.accuracy),
        ("type1_error_rate", m.type1_error_rate),
        ("selected_variables", m.selected_variables as f64),
        ("selected_groups", m.selected_groups as f64),
        ("mse", m.mse),
        ("mae", m.mae),
    ]
}

fn summarize(records: &[&ReplicateRecord]) -> (usize, BTreeMap<String, MetricSummary>) {
    let ok: Vec<&SelectionMetrics> = records.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let mut out = BTreeMap::new();
    if let Some(first) = ok.first() {
        for (k, (name, _)) in metric_values(first).iter().enumerate() {
            let values: Vec<f64> = ok.iter().map(|m| metric_values(m)[k].1).collect();
            out.insert(name.to_string(), MetricSummary::from_values(&values));
        }
    }
    (records.len() - ok.len(), out)
}

struct Cell {
    label: String,
    model: ModelConfig,
    group_sparsity: f64,
    /// Index of the data-generating setting, shared by cells that should
    /// see the same draws.
    draw_group: usize,
}

fn run_cells(scenario: &Scenario, cells: &[Cell], replicates: usize, seed: u64) -> Result<SimulationReport> {
    if replicates == 0 {
        return Err(SgsError::InvalidConfig("replicates must be at least 1".into()));
    }
    scenario.partition()?;
    let replicate_seeds: Vec<u64> = (0..replicates).map(|r| replicate_seed(seed, r as u64)).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..replicates).map(move |r| (c, r))).collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let cell = &cells[c];
            // distinct sparsity settings get independent draws
            let draw_seed = replicate_seed(replicate_seeds[r], cell.draw_group as u64);
            let outcome = scenario
                .with_group_sparsity(cell.group_sparsity)
                .with_seed(draw_seed)
                .generate()
                .and_then(|(data, truth)| {
                    let beta = cell.model.fit(&data, draw_seed)?;
                    compute_metrics_for(&truth, &beta, data.partition())
                });
            let (metrics, error) = match outcome {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ReplicateRecord { cell: c, replicate: r, seed: draw_seed, metrics, error }
        })
        .collect();
    let partition = scenario.partition()?;
    let (_, fraction) = scenario.sparsity();
    let summaries = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.cell == c).collect();
            let (failures, metrics) = summarize(&mine);
            let (p1, m1) = true_counts(&partition, cell.group_sparsity, fraction);
            CellSummary {
                label: cell.label.clone(),
                model: cell.model.name.clone(),
                group_sparsity: cell.group_sparsity,
                variable_sparsity: 1.0 - p1 as f64 / partition.num_variables() as f64,
                q_v: cell.model.q_v,
                q_g: cell.model.q_g,
                null_variables: partition.num_variables() - p1,
                null_groups: partition.num_groups() - m1,
                replicates,
                failures,
                metrics,
            }
        })
        .collect();
    Ok(SimulationReport {
        scenario: scenario.clone(),
        replicate_seeds,
        cells: summaries,
        records,
    })
}

/// FDR study on an orthogonal scenario: every FDR level is fitted at every
/// group-sparsity level with `lambda = 1/n`, no intercept and `alpha` equal
/// to the within-active fraction. Each sparsity level gets its own draws,
/// shared across FDR levels.
pub fn run_fdr_experiment(
    scenario: &OrthogonalScenario,
    group_sparsity_grid: &[f64],
    q_levels: &[f64],
    variable_kind: VariableSequence,
    group_kind: GroupSequence,
    replicates: usize,
    seed: u64,
) -> Result<SimulationReport> {
    let solver = SolverConfig { fit_intercept: false, ..SolverConfig::default() };
    let mut cells = Vec::new();
    for (g, &gs) in group_sparsity_grid.iter().enumerate() {
        check_proportion("group sparsity", gs)?;
        for &q in q_levels {
            cells.push(Cell {
                label: format!("q={q} group_sparsity={gs}"),
                model: ModelConfig {
                    name: "sgs".into(),
                    alpha: scenario.within_active_fraction,
                    q_v: q,
                    q_g: q,
                    variable_kind,
                    group_kind,
                    selector: Selector::Fixed { scale: 1.0 },
                    solver: solver.clone(),
                    standardize: false,
                },
                group_sparsity: gs,
                draw_group: g,
            });
        }
    }
    run_cells(&Scenario::Orthogonal(scenario.clone()), &cells, replicates, seed)
}

/// Compares models on shared draws of one scenario.
pub fn run_selection_study(
    scenario: &Scenario,
    models: &[ModelConfig],
    replicates: usize,
    seed: u64,
) -> Result<SimulationReport> {
    let (gs, _) = scenario.sparsity();
    let cells: Vec<Cell> = models
        .iter()
        .map(|m| Cell {
            label: m.name.clone(),
            model: m.clone(),
            group_sparsity: gs,
            draw_group: 0,
        })
        .collect();
    run_cells(scenario, &cells, replicates, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_sizes() {
        let g = Grouping::UnevenBands { sizes: vec![3, 4, 5, 6, 7], groups_per_size: 2 };
        assert_eq!(g.sizes(), vec![3, 4, 5, 6, 7, 3, 4, 5, 6, 7]);
        assert_eq!(active_in_group(0.6, 5), 3);
        assert_eq!(active_in_group(0.1, 3), 1);
    }

    #[test]
    fn stratified_choice_covers_bands() {
        let part = GroupPartition::from_sizes(&[3, 4, 5, 3, 4, 5]).unwrap();
        let mut rng = child_rng(1, Stream::Scenario, 0);
        let chosen = choose_active_groups(&part, 3, &mut rng);
        let mut sizes: Vec<usize> = chosen.iter().map(|&g| part.size(g)).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 4, 5]);
    }

    #[test]
    fn summary_standard_error() {
        let s = MetricSummary::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
