//! Regularization paths: the smallest lambda giving the null model, and
//! warm-started fits down a log-linear grid.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Family, GroupPartition, GroupedDataset};
use crate::error::{Result, SgsError};
use crate::loss::LossFunction;
use crate::penalty::PenaltySpec;
use crate::prox::SortedWeights;
use crate::solver::{atos_fit, atos_fit_traced, AtosState, SgsSolution, SolverConfig};

/// Loss gradient at the intercept-only model.
pub fn null_gradient(data: &GroupedDataset, fit_intercept: bool) -> DVector<f64> {
    let loss = LossFunction::new(data.family());
    let p = data.p();
    let intercept = if !fit_intercept {
        0.0
    } else {
        match data.family() {
            Family::Gaussian => data.y().mean(),
            Family::Binomial => {
                let ybar = data.y().mean().clamp(1e-12, 1.0 - 1e-12);
                (ybar / (1.0 - ybar)).ln()
            }
        }
    };
    loss.gradient_on(data, &DVector::zeros(p), intercept).0
}

/// Dual norm of the sorted-L1 norm: `max_k sum_{i<=k} |s|_(i) / sum_{i<=k} w_i`.
pub fn sorted_dual_norm(s: &[f64], weights: &SortedWeights) -> f64 {
    let mut mags: Vec<f64> = s.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut num = 0.0;
    let mut den = 0.0;
    let mut best: f64 = 0.0;
    for (m, w) in mags.iter().zip(weights.values()) {
        num += m;
        den += w;
        if num > 0.0 {
            best = best.max(if den > 0.0 { num / den } else { f64::INFINITY });
        }
    }
    best
}

/// Dual norm of the group term, `b -> sum_r w_r (sqrt(p_g) ||b^(g)||)_(r)`.
pub fn group_dual_norm(s: &[f64], weights: &SortedWeights, partition: &GroupPartition) -> f64 {
    let scaled: Vec<f64> = partition
        .groups()
        .map(|members| {
            members.iter().map(|&i| s[i] * s[i]).sum::<f64>().sqrt() / (members.len() as f64).sqrt()
        })
        .collect();
    sorted_dual_norm(&scaled, weights)
}

/// A lambda at which the null model is optimal, from splitting the null
/// gradient between the two penalty terms in the best proportion.
pub fn lambda_upper_bound(gradient: &[f64], template: &PenaltySpec, partition: &GroupPartition) -> f64 {
    let alpha = template.alpha;
    let rho_v = if alpha > 0.0 { sorted_dual_norm(gradient, &template.v) } else { f64::INFINITY };
    let rho_w = if alpha < 1.0 {
        group_dual_norm(gradient, &template.w, partition)
    } else {
        f64::INFINITY
    };
    if alpha == 0.0 {
        return rho_w;
    }
    if alpha == 1.0 {
        return rho_v;
    }
    if rho_v == 0.0 || rho_w == 0.0 {
        return 0.0;
    }
    if !rho_v.is_finite() {
        return rho_w / (1.0 - alpha);
    }
    if !rho_w.is_finite() {
        return rho_v / alpha;
    }
    rho_v * rho_w / (alpha * rho_w + (1.0 - alpha) * rho_v)
}

const REFINE_HALVINGS: usize = 30;
const REFINE_BISECTIONS: usize = 8;

/// Smallest lambda (to within a bisection in log scale) whose fit is the null model.
pub fn lambda_max(data: &GroupedDataset, template: &PenaltySpec, config: &SolverConfig) -> Result<f64> {
    let grad = null_gradient(data, config.fit_intercept);
    let upper = lambda_upper_bound(grad.as_slice(), template, data.partition());
    if !upper.is_finite() {
        return Err(SgsError::InvalidConfig(
            "penalty weights are zero, so no lambda gives the null model".into(),
        ));
    }
    if upper == 0.0 {
        return Err(SgsError::ZeroGradient);
    }
    let is_null = |lambda: f64| -> Result<bool> { Ok(atos_fit(data, &template.with_lambda(lambda), config)?.is_null()) };
    let mut hi = upper;
    let mut lo = upper / 2.0;
    let mut halvings = 0;
    while is_null(lo)? {
        hi = lo;
        lo /= 2.0;
        halvings += 1;
        if halvings >= REFINE_HALVINGS {
            return Ok(hi);
        }
    }
    for _ in 0..REFINE_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if is_null(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSettings {
    pub path_length: usize,
    pub min_ratio: f64,
    /// Use this value instead of computing the null-model lambda.
    pub lambda_max: Option<f64>,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            path_length: 20,
            min_ratio: 0.1,
            lambda_max: None,
        }
    }
}

impl PathSettings {
    pub fn validate(&self) -> Result<()> {
        if self.path_length < 2 {
            return Err(SgsError::InvalidConfig(format!(
                "path length must be at least 2, got {}",
                self.path_length
            )));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio < 1.0) {
            return Err(SgsError::InvalidConfig(format!(
                "min ratio must lie in (0, 1), got {}",
                self.min_ratio
            )));
        }
        Ok(())
    }
}

/// `count` values from `start` down to `start * min_ratio`, equally spaced in log scale.
pub fn log_linear_grid(start: f64, min_ratio: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| start * min_ratio.powf(k as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationPath {
    pub lambdas: Vec<f64>,
    pub solutions: Vec<SgsSolution>,
}

/// Fits every lambda of the path, warm-starting each from the previous fit.
///
/// The weight sequences of `template` are kept fixed; only the objective
/// multiplier changes along the path.
pub fn fit_path(
    data: &GroupedDataset,
    template: &PenaltySpec,
    settings: &PathSettings,
    config: &SolverConfig,
) -> Result<RegularizationPath> {
    settings.validate()?;
    let start = match settings.lambda_max {
        Some(l) if l > 0.0 && l.is_finite() => l,
        Some(l) => return Err(SgsError::InvalidConfig(format!("lambda max must be positive, got {l}"))),
        None => lambda_max(data, template, config)?,
    };
    let lambdas = log_linear_grid(start, settings.min_ratio, settings.path_length);
    fit_lambdas(data, template, &lambdas, config)
}

/// Warm-started fits at the given decreasing lambdas.
pub fn fit_lambdas(
    data: &GroupedDataset,
    template: &PenaltySpec,
    lambdas: &[f64],
    config: &SolverConfig,
) -> Result<RegularizationPath> {
    let mut solutions = Vec::with_capacity(lambdas.len());
    let mut warm: Option<(AtosState, f64)> = None;
    for &lambda in lambdas {
        let spec = template.with_lambda(lambda);
        let start = warm.as_ref().map(|(state, prev)| AtosState {
            // the dual iterate is a scaled subgradient of the group term
            u: &state.u * (lambda / prev),
            ..state.clone()
        });
        let (solution, trace) = atos_fit_traced(data, &spec, config, start.as_ref())?;
        if let Some(prev) = solutions.last() {
            let prev: &SgsSolution = prev;
            if solution.selected_variables.len() < prev.selected_variables.len() {
                log::debug!(
                    "support shrank from {} to {} at lambda {lambda:.4e}",
                    prev.selected_variables.len(),
                    solution.selected_variables.len()
                );
            }
        }
        if !solution.converged {
            log::warn!("fit at lambda {lambda:.4e} did not converge (residual {:.2e})", solution.final_residual);
        }
        warm = Some((trace.state, lambda));
        solutions.push(solution);
    }
    Ok(RegularizationPath {
        lambdas: lambdas.to_vec(),
        solutions,
    })
}
