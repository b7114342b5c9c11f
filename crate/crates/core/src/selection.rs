//! Choosing lambda: K-fold cross-validation with the one-standard-error
//! rule, scaled SGS, and adaptively scaled SGS.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Family, GroupedDataset};
use crate::error::{Result, SgsError};
use crate::path::{fit_lambdas, lambda_max, log_linear_grid, PathSettings, RegularizationPath};
use crate::penalty::{build_penalty_spec, GroupSequence, PenaltySpec, SequenceOptions, VariableSequence};
use crate::rng::{child_rng, Stream};
use crate::solver::{atos_fit_traced, predict, AtosState, SgsSolution, SolverConfig};

/// Fold of every row: rows are shuffled with the seed, then dealt round-robin.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut child_rng(seed, Stream::Folds, 0));
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % folds;
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    pub fold_assignment: Vec<usize>,
    /// `fold_errors[k][f]`: error at lambda `k` on validation fold `f`.
    pub fold_errors: Vec<Vec<f64>>,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Mean misclassification rate per lambda (binomial only).
    pub misclassification: Option<Vec<f64>>,
    pub lambda_min_index: usize,
    pub lambda_1se_index: usize,
    /// Full-data fit at the 1se lambda.
    pub chosen: SgsSolution,
    pub path: RegularizationPath,
}

fn held_out_errors(
    solution: &SgsSolution,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
) -> Result<(f64, f64)> {
    let fitted = predict(solution, x, family)?;
    let n = y.len() as f64;
    Ok(match family {
        Family::Gaussian => ((y - fitted).norm_squared() / n, f64::NAN),
        Family::Binomial => {
            let mut deviance = 0.0;
            let mut wrong = 0usize;
            for (&prob, &yi) in fitted.iter().zip(y.iter()) {
                let q = prob.clamp(1e-15, 1.0 - 1e-15);
                deviance -= 2.0 * (yi * q.ln() + (1.0 - yi) * (1.0 - q).ln());
                if (prob >= 0.5) != (yi == 1.0) {
                    wrong += 1;
                }
            }
            (deviance / n, wrong as f64 / n)
        }
    })
}

/// Index of the minimum mean error, and the largest lambda (smallest index)
/// whose mean error is within one standard error of that minimum.
pub fn one_standard_error_rule(mean_error: &[f64], std_error: &[f64]) -> (usize, usize) {
    let min_index = mean_error
        .iter()
        .enumerate()
        .fold(0, |best, (k, &e)| if e < mean_error[best] { k } else { best });
    let threshold = mean_error[min_index] + std_error[min_index];
    let one_se = mean_error.iter().position(|&e| e <= threshold).unwrap_or(min_index);
    (min_index, one_se)
}

/// K-fold cross-validation on a lambda path computed from the full data.
///
/// Any standardization should be applied to `data` beforehand. Folds are
/// fitted concurrently; the result does not depend on the thread count.
pub fn cross_validate(
    data: &GroupedDataset,
    template: &PenaltySpec,
    folds: usize,
    settings: &PathSettings,
    config: &SolverConfig,
    seed: u64,
) -> Result<CvResult> {
    settings.validate()?;
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(SgsError::InvalidConfig(format!(
            "fold count must lie in [2, {n}], got {folds}"
        )));
    }
    let assignment = assign_folds(n, folds, seed);
    for f in 0..folds {
        let train = assignment.iter().filter(|&&a| a != f).count();
        if train < 2 {
            return Err(SgsError::FoldTooSmall { fold: f, rows: train });
        }
    }
    let start = match settings.lambda_max {
        Some(l) => l,
        None => lambda_max(data, template, config)?,
    };
    let lambdas = log_linear_grid(start, settings.min_ratio, settings.path_length);

    let per_fold: Vec<Vec<(f64, f64)>> = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<(f64, f64)>> {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let train_data = data.select_rows(&train);
            let test_data = data.select_rows(&test);
            let path = fit_lambdas(&train_data, template, &lambdas, config)?;
            path.solutions
                .iter()
                .map(|s| held_out_errors(s, test_data.x(), test_data.y(), data.family()))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let k_count = lambdas.len();
    let fold_errors: Vec<Vec<f64>> = (0..k_count)
        .map(|k| per_fold.iter().map(|fold| fold[k].0).collect())
        .collect();
    let mean_error: Vec<f64> = fold_errors.iter().map(|e| e.iter().sum::<f64>() / folds as f64).collect();
    let std_error: Vec<f64> = fold_errors
        .iter()
        .zip(&mean_error)
        .map(|(e, m)| {
            let var = e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (folds - 1) as f64;
            (var / folds as f64).sqrt()
        })
        .collect();
    let misclassification = (data.family() == Family::Binomial).then(|| {
        (0..k_count)
            .map(|k| per_fold.iter().map(|fold| fold[k].1).sum::<f64>() / folds as f64)
            .collect()
    });
    let (lambda_min_index, lambda_1se_index) = one_standard_error_rule(&mean_error, &std_error);
    let path = fit_lambdas(data, template, &lambdas, config)?;
    let chosen = path.solutions[lambda_1se_index].clone();
    Ok(CvResult {
        lambdas,
        fold_assignment: assignment,
        fold_errors,
        mean_error,
        std_error,
        misclassification,
        lambda_min_index,
        lambda_1se_index,
        chosen,
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// Final tuning value.
    pub lambda_hat: f64,
    /// Noise level behind it (scaled SGS) or the residual variance (AS-SGS).
    pub sigma: f64,
    pub support: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// The support sequence revisited an earlier support.
    pub cycle_detected: bool,
}

fn check_gaussian(data: &GroupedDataset) -> Result<()> {
    if data.family() != Family::Gaussian {
        return Err(SgsError::InvalidConfig(
            "noise estimation needs the gaussian family".into(),
        ));
    }
    Ok(())
}

fn residual_sum_of_squares(data: &GroupedDataset, solution: &SgsSolution) -> Result<f64> {
    let fitted = predict(solution, data.x(), Family::Gaussian)?;
    Ok((data.y() - fitted).norm_squared())
}

pub const DEFAULT_MAX_ROUNDS: usize = 100;
const SCALED_TOLERANCE: f64 = 1e-6;

/// Scaled SGS: alternate `sigma^2 = RSS / n` with a fit at
/// `lambda = sigma * template.lambda`, keeping the weight sequences fixed.
/// Starts from the intercept-only model.
pub fn scaled_sgs(
    data: &GroupedDataset,
    template: &PenaltySpec,
    config: &SolverConfig,
    max_rounds: usize,
) -> Result<(NoiseEstimate, SgsSolution)> {
    check_gaussian(data)?;
    let n = data.n() as f64;
    let ybar = if config.fit_intercept { data.y().mean() } else { 0.0 };
    let mut sigma = (data.y().add_scalar(-ybar).norm_squared() / n).sqrt();
    let mut warm: Option<AtosState> = None;
    let mut last: Option<SgsSolution> = None;
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        let spec = template.with_lambda(sigma * template.lambda);
        let (solution, trace) = atos_fit_traced(data, &spec, config, warm.as_ref())?;
        let next = (residual_sum_of_squares(data, &solution)? / n).sqrt();
        let change = (next - sigma).abs();
        let done = change <= SCALED_TOLERANCE * sigma || next == 0.0;
        sigma = next;
        warm = Some(trace.state);
        last = Some(solution);
        if done {
            converged = true;
            break;
        }
    }
    let mut solution = last.expect("at least one round");
    if sigma == 0.0 {
        // the limit lambda -> 0 is the unpenalized fit
        solution = atos_fit_traced(data, &template.with_lambda(0.0), config, warm.as_ref())?.0;
    }
    let estimate = NoiseEstimate {
        lambda_hat: sigma * template.lambda,
        sigma,
        support: solution.selected_variables.clone(),
        iterations: rounds,
        converged,
        cycle_detected: false,
    };
    Ok((estimate, solution))
}

/// RSS of the least-squares fit with an intercept on the columns in `support`.
pub fn ols_rss(data: &GroupedDataset, support: &[usize]) -> f64 {
    let n = data.n();
    let design = DMatrix::from_fn(n, support.len() + 1, |i, j| if j == 0 { 1.0 } else { data.x()[(i, support[j - 1])] });
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(data.y(), 1e-12)
        .unwrap_or_else(|_| DVector::zeros(support.len() + 1));
    (data.y() - design * coef).norm_squared()
}

/// Penalty used by one AS-SGS round: vMax/gMax generated at scale
/// `lambda_hat`, objective multiplier `lambda_hat / n`.
pub fn as_sgs_spec(
    data: &GroupedDataset,
    alpha: f64,
    q_v: f64,
    q_g: f64,
    opts: &SequenceOptions,
    lambda_hat: f64,
) -> Result<PenaltySpec> {
    let round_opts = SequenceOptions { scale: lambda_hat, ..*opts };
    build_penalty_spec(
        data.partition(),
        alpha,
        lambda_hat / data.n() as f64,
        q_v,
        q_g,
        VariableSequence::VMax,
        GroupSequence::GMax,
        &round_opts,
    )
}

/// Adaptively scaled SGS: estimate `lambda_hat = RSS / (n - |S| - 1)` from
/// the least-squares fit on the current support, refit with sequences
/// regenerated at `lambda_hat`, and repeat until the support is unchanged.
///
/// If a support repeats an earlier one the loop stops and returns whichever
/// of the last two iterates has the smaller RSS, with `cycle_detected` set.
pub fn adaptively_scaled_sgs(
    data: &GroupedDataset,
    alpha: f64,
    q_v: f64,
    q_g: f64,
    opts: &SequenceOptions,
    config: &SolverConfig,
    max_rounds: usize,
) -> Result<(NoiseEstimate, SgsSolution)> {
    check_gaussian(data)?;
    let n = data.n() as i64;
    let mut support: Vec<usize> = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut previous: Option<(f64, f64, SgsSolution)> = None;
    for round in 1..=max_rounds {
        let df = n - support.len() as i64 - 1;
        if df < 1 {
            return Err(SgsError::DegenerateResidual(df));
        }
        let lambda_hat = ols_rss(data, &support) / df as f64;
        let spec = as_sgs_spec(data, alpha, q_v, q_g, opts, lambda_hat)?;
        let (solution, _) = atos_fit_traced(data, &spec, config, None)?;
        let next = solution.selected_variables.clone();
        let estimate = |converged: bool, cycle: bool, lambda_hat: f64, solution: &SgsSolution| NoiseEstimate {
            lambda_hat,
            sigma: lambda_hat,
            support: solution.selected_variables.clone(),
            iterations: round,
            converged,
            cycle_detected: cycle,
        };
        if next == support {
            return Ok((estimate(true, false, lambda_hat, &solution), solution));
        }
        if seen.contains(&next) {
            let rss_now = residual_sum_of_squares(data, &solution)?;
            return Ok(match previous {
                Some((rss_prev, lambda_prev, prev)) if rss_prev < rss_now => {
                    (estimate(false, true, lambda_prev, &prev), prev)
                }
                _ => (estimate(false, true, lambda_hat, &solution), solution),
            });
        }
        seen.insert(support.clone());
        previous = Some((residual_sum_of_squares(data, &solution)?, lambda_hat, solution.clone()));
        support = next;
        if round == max_rounds {
            return Ok((estimate(false, false, lambda_hat, &solution), solution));
        }
    }
    Err(SgsError::InvalidConfig("max rounds must be at least 1".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_rows() {
        let a = assign_folds(12, 12, 3);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..12).collect::<Vec<_>>());
        assert_eq!(a, assign_folds(12, 12, 3));
        let b = assign_folds(10, 3, 1);
        let counts: Vec<usize> = (0..3).map(|f| b.iter().filter(|&&x| x == f).count()).collect();
        assert_eq!(counts, vec![4, 3, 3]);
    }

    #[test]
    fn one_se_rule_on_arrays() {
        let mean = [5.0, 3.0, 2.1, 2.0, 2.05];
        let se = [0.1, 0.1, 0.1, 0.2, 0.1];
        assert_eq!(one_standard_error_rule(&mean, &se), (3, 2));
        let (min, one) = one_standard_error_rule(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!((min, one), (0, 0));
    }
}
