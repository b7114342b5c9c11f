//! Selection accuracy against a known truth.

use serde::{Deserialize, Serialize};

use crate::data::GroupPartition;
use crate::error::{Result, SgsError};
use crate::solver::SgsSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    /// Counts from truth and selection flags of equal length.
    pub fn from_flags(truth: &[bool], selected: &[bool]) -> Self {
        let mut c = Self::default();
        for (&t, &s) in truth.iter().zip(selected) {
            match (t, s) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn selected(&self) -> usize {
        self.tp + self.fp
    }

    /// `fp / max(fp + tp, 1)`: zero when nothing is selected.
    pub fn fdr(&self) -> f64 {
        self.fp as f64 / self.selected().max(1) as f64
    }

    pub fn precision(&self) -> f64 {
        self.tp as f64 / self.selected().max(1) as f64
    }

    pub fn sensitivity(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_).max(1) as f64
    }

    /// `2 tp / max(2 tp + fp + fn, 1)`.
    pub fn f1(&self) -> f64 {
        (2 * self.tp) as f64 / (2 * self.tp + self.fp + self.fn_).max(1) as f64
    }

    /// `(tp + tn) / total`.
    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    /// Fraction of truly null entries that were selected.
    pub fn false_positive_rate(&self) -> f64 {
        self.fp as f64 / (self.fp + self.tn).max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMetrics {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub fdr: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl From<ConfusionCounts> for LevelMetrics {
    fn from(counts: ConfusionCounts) -> Self {
        Self {
            counts,
            fdr: counts.fdr(),
            sensitivity: counts.sensitivity(),
            f1: counts.f1(),
            accuracy: counts.accuracy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub variable: LevelMetrics,
    pub group: LevelMetrics,
    /// Fraction of null variables selected.
    pub type1_error_rate: f64,
    pub selected_variables: usize,
    pub selected_groups: usize,
    /// Mean squared and absolute error of the coefficients against the truth.
    pub mse: f64,
    pub mae: f64,
}

/// Variable- and group-level selection counts; a group is truly active when
/// any of its coefficients is non-zero.
pub fn compute_metrics(
    true_beta: &[f64],
    solution: &SgsSolution,
    partition: &GroupPartition,
) -> Result<SelectionMetrics> {
    compute_metrics_for(true_beta, &solution.beta, partition)
}

pub fn compute_metrics_for(
    true_beta: &[f64],
    beta_hat: &[f64],
    partition: &GroupPartition,
) -> Result<SelectionMetrics> {
    let p = partition.num_variables();
    if true_beta.len() != p || beta_hat.len() != p {
        return Err(SgsError::DimensionMismatch(format!(
            "partition has {p} variables; truth has {}, estimate has {}",
            true_beta.len(),
            beta_hat.len()
        )));
    }
    let truth: Vec<bool> = true_beta.iter().map(|&b| b != 0.0).collect();
    let chosen: Vec<bool> = beta_hat.iter().map(|&b| b != 0.0).collect();
    let group_truth: Vec<bool> = partition.groups().map(|g| g.iter().any(|&i| truth[i])).collect();
    let group_chosen: Vec<bool> = partition.groups().map(|g| g.iter().any(|&i| chosen[i])).collect();
    let variable = ConfusionCounts::from_flags(&truth, &chosen);
    let group = ConfusionCounts::from_flags(&group_truth, &group_chosen);
    let (sq, abs) = true_beta
        .iter()
        .zip(beta_hat)
        .fold((0.0, 0.0), |(s, a), (t, e)| (s + (t - e).powi(2), a + (t - e).abs()));
    Ok(SelectionMetrics {
        variable: variable.into(),
        group: group.into(),
        type1_error_rate: variable.false_positive_rate(),
        selected_variables: variable.selected(),
        selected_groups: group.selected(),
        mse: sq / p as f64,
        mae: abs / p as f64,
    })
}
