//! Adaptive three operator splitting for the sparse-group SLOPE objective
//!
//! `f(b) + lambda alpha sum_i v_i |b|_(i) + lambda (1 - alpha) sum_g w_g sqrt(p_g) ||b^(g)||`.
//!
//! Each iteration takes a backtracked proximal-gradient step through the
//! SLOPE prox, then a gSLOPE prox in the `D b` coordinates, then a dual
//! update. The intercept is handled by centering (Gaussian) or as an
//! unpenalized coordinate of the smooth step (binomial).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Family, GroupPartition, GroupedDataset};
use crate::error::{Result, SgsError};
use crate::loss::{linear_predictor, sigmoid, LossFunction};
use crate::penalty::PenaltySpec;
use crate::prox::{group_norms, group_sorted_l1, prox_gslope_transformed, prox_slope, sorted_l1, GroupScaling};

/// How the first step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "value")]
pub enum InitialStep {
    /// Inverse of a power-iteration estimate of the gradient's Lipschitz constant.
    Lipschitz,
    /// The probing rule of [`auto_initial_step`].
    Probe,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma0: InitialStep,
    pub eta: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub fit_intercept: bool,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma0: InitialStep::Lipschitz,
            eta: 0.7,
            tolerance: 1e-4,
            max_iterations: 1000,
            fit_intercept: true,
            max_backtracks: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(SgsError::InvalidConfig(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.tolerance > 0.0) {
            return Err(SgsError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 || self.max_backtracks == 0 {
            return Err(SgsError::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if let InitialStep::Fixed(g) = self.gamma0 {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SgsError::InvalidConfig(format!("gamma0 must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgsSolution {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub selected_variables: Vec<usize>,
    pub selected_groups: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub objective: f64,
}

impl SgsSolution {
    fn from_beta(
        beta: Vec<f64>,
        intercept: f64,
        partition: &GroupPartition,
        iterations: usize,
        converged: bool,
        final_residual: f64,
        objective: f64,
    ) -> Self {
        let selected_variables: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
        let mut selected_groups: Vec<usize> =
            selected_variables.iter().map(|&i| partition.group_of(i)).collect();
        selected_groups.sort_unstable();
        selected_groups.dedup();
        Self {
            beta,
            intercept,
            selected_variables,
            selected_groups,
            iterations,
            converged,
            final_residual,
            objective,
        }
    }

    pub fn is_null(&self) -> bool {
        self.selected_variables.is_empty()
    }
}

/// Iterates of the splitting scheme, for warm starts and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AtosState {
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    pub intercept: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtosTrace {
    pub state: AtosState,
    /// Step size accepted at every iteration.
    pub step_sizes: Vec<f64>,
    /// Set when some backtracking search hit its cap.
    pub backtrack_exhausted: bool,
}

const PROBE_START: f64 = 1e-3;
const PROBE_ROUNDS: usize = 60;

/// Step-size probe: shrink `eps` tenfold from 1e-3 until the gradient step
/// decreases `f`, then return `4 (f(z0) - f(z0 - eps grad)) / ||grad||^2`.
pub fn auto_initial_step_with(
    f: impl Fn(&DVector<f64>) -> f64,
    grad: &DVector<f64>,
    z0: &DVector<f64>,
) -> Result<f64> {
    let g2 = grad.norm_squared();
    if g2 == 0.0 {
        return Err(SgsError::ZeroGradient);
    }
    let f0 = f(z0);
    let mut eps = PROBE_START;
    for _ in 0..PROBE_ROUNDS {
        let trial = z0 - grad * eps;
        let ft = f(&trial);
        if ft <= f0 {
            let gamma = 4.0 * (f0 - ft) / g2;
            return if gamma > 0.0 { Ok(gamma) } else { Err(SgsError::ZeroGradient) };
        }
        eps *= 0.1;
    }
    Err(SgsError::ZeroGradient)
}

/// [`auto_initial_step_with`] on the loss of `data`, at intercept zero.
pub fn auto_initial_step(loss: &LossFunction, data: &GroupedDataset, z0: &DVector<f64>) -> Result<f64> {
    let (grad, _) = loss.gradient_on(data, z0, 0.0);
    auto_initial_step_with(|b| loss.value_on(data, b, 0.0), &grad, z0)
}

/// Largest eigenvalue of `A^T A / n`, with an optional all-ones column.
fn gram_spectral_estimate(x: &DMatrix<f64>, with_ones: bool) -> f64 {
    let (n, p) = x.shape();
    let k = p + usize::from(with_ones);
    if k == 0 || n == 0 {
        return 1.0;
    }
    // deterministic start with unequal entries to avoid orthogonal starts
    let mut v = DVector::from_iterator(k, (0..k).map(|i| 1.0 + 0.01 * (i % 7) as f64));
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..100 {
        let mut av = x * v.rows(0, p);
        if with_ones {
            av.add_scalar_mut(v[p]);
        }
        let mut next = DVector::zeros(k);
        next.rows_mut(0, p).copy_from(&x.tr_mul(&av));
        if with_ones {
            next[p] = av.sum();
        }
        next /= n as f64;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - estimate).abs() <= 1e-6 * norm;
        estimate = norm;
        v = next / norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Sum of both penalty terms at `b`.
pub fn penalty_value(spec: &PenaltySpec, b: &[f64], partition: &GroupPartition) -> f64 {
    let mut total = 0.0;
    if spec.alpha > 0.0 {
        total += sorted_l1(b, &spec.variable_weights());
    }
    if spec.alpha < 1.0 {
        total += group_sorted_l1(b, &spec.group_weights(), partition);
    }
    total
}

/// Full objective value on `data`.
pub fn objective(data: &GroupedDataset, spec: &PenaltySpec, beta: &[f64], intercept: f64) -> f64 {
    let loss = LossFunction::new(data.family());
    let b = DVector::from_column_slice(beta);
    loss.value_on(data, &b, intercept) + penalty_value(spec, beta, data.partition())
}

fn check_spec(data: &GroupedDataset, spec: &PenaltySpec) -> Result<()> {
    if spec.v.len() != data.p() {
        return Err(SgsError::LengthMismatch {
            expected: data.p(),
            found: spec.v.len(),
        });
    }
    if spec.w.len() != data.partition().num_groups() {
        return Err(SgsError::LengthMismatch {
            expected: data.partition().num_groups(),
            found: spec.w.len(),
        });
    }
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(SgsError::AlphaOutOfRange {
            alpha: spec.alpha,
            allowed: "[0, 1]",
        });
    }
    if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) {
        return Err(SgsError::InvalidConfig(format!("lambda must be non-negative, got {}", spec.lambda)));
    }
    Ok(())
}

pub fn atos_fit(data: &GroupedDataset, spec: &PenaltySpec, config: &SolverConfig) -> Result<SgsSolution> {
    atos_fit_traced(data, spec, config, None).map(|(s, _)| s)
}

/// Fits from an optional warm start and also returns the final iterates.
pub fn atos_fit_traced(
    data: &GroupedDataset,
    spec: &PenaltySpec,
    config: &SolverConfig,
    warm: Option<&AtosState>,
) -> Result<(SgsSolution, AtosTrace)> {
    config.validate()?;
    check_spec(data, spec)?;
    let family = data.family();
    let loss = LossFunction::new(family);
    let partition = data.partition();
    let p = data.p();

    // Gaussian intercepts are absorbed by centering
    let centered = family == Family::Gaussian && config.fit_intercept;
    let (x_owned, y_owned, x_means, y_mean);
    let (x, y): (&DMatrix<f64>, &DVector<f64>) = if centered {
        let means: DVector<f64> = DVector::from_iterator(p, data.x().column_iter().map(|c| c.mean()));
        let mut xc = data.x().clone();
        for (j, mut col) in xc.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        let ym = data.y().mean();
        y_owned = data.y().add_scalar(-ym);
        x_owned = xc;
        x_means = means;
        y_mean = ym;
        (&x_owned, &y_owned)
    } else {
        x_means = DVector::zeros(p);
        y_mean = 0.0;
        (data.x(), data.y())
    };
    let free_intercept = family == Family::Binomial && config.fit_intercept;

    let slope_w = spec.variable_weights();
    let group_w = spec.group_weights();
    let scaling = GroupScaling::new(partition);

    let (mut z, mut u, mut c, mut gamma) = match warm {
        Some(s) => {
            if s.z.len() != p || s.u.len() != p {
                return Err(SgsError::LengthMismatch { expected: p, found: s.z.len() });
            }
            (s.z.clone(), s.u.clone(), if free_intercept { s.intercept } else { 0.0 }, s.gamma)
        }
        None => {
            let c0 = if free_intercept {
                let ybar = data.y().mean().clamp(1e-6, 1.0 - 1e-6);
                (ybar / (1.0 - ybar)).ln()
            } else {
                0.0
            };
            let z0 = DVector::zeros(p);
            let gamma = match config.gamma0 {
                InitialStep::Fixed(g) => g,
                InitialStep::Lipschitz => {
                    let mut l = gram_spectral_estimate(x, free_intercept);
                    if family == Family::Binomial {
                        l /= 4.0;
                    }
                    if l > 0.0 { 1.0 / l } else { 1.0 }
                }
                InitialStep::Probe => {
                    let (g, _) = loss.gradient(x, y, &z0, c0);
                    auto_initial_step_with(|b| loss.value(x, y, b, c0), &g, &z0).unwrap_or(1.0)
                }
            };
            (z0, DVector::zeros(p), c0, gamma)
        }
    };

    let mut step_sizes = Vec::new();
    let mut backtrack_exhausted = false;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut b = z.clone();

    let mut eta_z = linear_predictor(x, &z, c);
    for t in 1..=config.max_iterations {
        iterations = t;
        let fz = loss.value_eta(&eta_z, y);
        if !fz.is_finite() {
            return Err(SgsError::NumericalOverflow);
        }
        let r = loss.eta_gradient(&eta_z, y);
        let grad = x.tr_mul(&r);
        let grad_c = if free_intercept { r.sum() } else { 0.0 };

        let mut accepted = false;
        let mut c_new = c;
        for _ in 0..config.max_backtracks {
            let point = &z - &u * gamma - &grad * gamma;
            b = DVector::from_vec(prox_slope(point.as_slice(), &slope_w.scaled(gamma))?);
            c_new = c - gamma * grad_c;
            let fb = loss.value_eta(&linear_predictor(x, &b, c_new), y);
            let diff = &b - &z;
            let dc = c_new - c;
            let model = fz + grad.dot(&diff) + grad_c * dc + (diff.norm_squared() + dc * dc) / (2.0 * gamma);
            if fb <= model + 1e-12 * fz.abs().max(1.0) {
                accepted = true;
                break;
            }
            gamma *= config.eta;
        }
        if !accepted {
            backtrack_exhausted = true;
        }
        step_sizes.push(gamma);

        let z_new = DVector::from_vec(prox_gslope_transformed(
            b.as_slice(),
            u.as_slice(),
            gamma,
            &group_w,
            &scaling,
            partition,
        )?);
        let dc = c_new - c;
        residual = ((&b - &z).norm_squared() + dc * dc).sqrt();
        u += (&b - &z_new) / gamma;
        z = z_new;
        c = c_new;
        if !accepted {
            break;
        }
        if residual <= config.tolerance {
            converged = true;
            break;
        }
        eta_z = linear_predictor(x, &z, c);
    }

    // variable zeros come from b, group zeros from z
    let norms_z = group_norms(z.as_slice(), partition);
    let mut beta: Vec<f64> = b.iter().copied().collect();
    for (g, members) in partition.groups().enumerate() {
        if norms_z[g] == 0.0 {
            for &i in members {
                beta[i] = 0.0;
            }
        }
    }
    let intercept = if centered {
        y_mean - x_means.iter().zip(&beta).map(|(m, bi)| m * bi).sum::<f64>()
    } else {
        c
    };
    let obj = objective(data, spec, &beta, intercept);
    if !obj.is_finite() {
        return Err(SgsError::NumericalOverflow);
    }
    let solution = SgsSolution::from_beta(beta, intercept, partition, iterations, converged, residual, obj);
    let trace = AtosTrace {
        state: AtosState { z, u, intercept: c, gamma },
        step_sizes,
        backtrack_exhausted,
    };
    Ok((solution, trace))
}

/// Fitted mean response: `X beta + intercept`, or class probabilities for
/// the binomial family.
pub fn predict(solution: &SgsSolution, x_new: &DMatrix<f64>, family: Family) -> Result<DVector<f64>> {
    if x_new.ncols() != solution.beta.len() {
        return Err(SgsError::DimensionMismatch(format!(
            "model has {} coefficients but the matrix has {} columns",
            solution.beta.len(),
            x_new.ncols()
        )));
    }
    let b = DVector::from_column_slice(&solution.beta);
    let eta = linear_predictor(x_new, &b, solution.intercept);
    Ok(match family {
        Family::Gaussian => eta,
        Family::Binomial => eta.map(sigmoid),
    })
}

/// Hard 0/1 labels at probability threshold 0.5.
pub fn predict_labels(solution: &SgsSolution, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(predict(solution, x_new, Family::Binomial)?
        .iter()
        .map(|&prob| if prob >= 0.5 { 1.0 } else { 0.0 })
        .collect())
}

/// Fraction of labels matched.
pub fn classification_rate(predicted: &[f64], observed: &[f64]) -> f64 {
    if observed.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(observed).filter(|(a, b)| a == b).count() as f64 / observed.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::SortedWeights;
    use approx::assert_abs_diff_eq;

    #[test]
    fn probe_matches_hand_evaluation() {
        // f(x) = |x|^2 / 2 at z0 = [1, 0]: eps = 1e-3 is accepted at once
        let z0 = DVector::from_vec(vec![1.0, 0.0]);
        let f = |b: &DVector<f64>| 0.5 * b.norm_squared();
        let gamma = auto_initial_step_with(f, &z0.clone(), &z0).unwrap();
        let expected = 4.0 * (0.5 - 0.5 * 0.999f64.powi(2));
        assert_abs_diff_eq!(gamma, expected, epsilon = 1e-15);
        assert_eq!(
            auto_initial_step_with(f, &DVector::zeros(2), &DVector::zeros(2)),
            Err(SgsError::ZeroGradient)
        );
    }

    #[test]
    fn power_iteration_on_identity() {
        let x = DMatrix::<f64>::identity(4, 4) * 2.0;
        assert_abs_diff_eq!(gram_spectral_estimate(&x, false), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig { eta: 1.0, ..SolverConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { gamma0: InitialStep::Fixed(0.0), ..SolverConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_coefficients_predict_intercept() {
        let sol = SgsSolution::from_beta(vec![0.0, 0.0], 0.3, &GroupPartition::singletons(2), 0, true, 0.0, 0.0);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let g = predict(&sol, &x, Family::Gaussian).unwrap();
        assert!(g.iter().all(|&v| v == 0.3));
        let b = predict(&sol, &x, Family::Binomial).unwrap();
        assert!(b.iter().all(|&v| (v - sigmoid(0.3)).abs() < 1e-15));
        assert!(predict(&sol, &DMatrix::zeros(1, 3), Family::Gaussian).is_err());
    }

    #[test]
    fn orthogonal_lasso_is_soft_thresholding() {
        let y = DVector::from_vec(vec![3.0, -0.5, 1.2, -2.0]);
        let data = GroupedDataset::new(
            DMatrix::identity(4, 4),
            y.clone(),
            GroupPartition::singletons(4),
            Family::Gaussian,
        )
        .unwrap();
        let spec = PenaltySpec::custom(
            1.0,
            0.25,
            SortedWeights::constant(4, 1.0).unwrap(),
            SortedWeights::zeros(4),
        )
        .unwrap();
        let config = SolverConfig { fit_intercept: false, tolerance: 1e-12, ..SolverConfig::default() };
        let sol = atos_fit(&data, &spec, &config).unwrap();
        // loss is |y - b|^2 / 8, so the threshold is 4 * 0.25
        for (b, yi) in sol.beta.iter().zip(y.iter()) {
            let expected = yi.signum() * (yi.abs() - 1.0).max(0.0);
            assert_abs_diff_eq!(*b, expected, epsilon = 1e-8);
        }
        assert!(sol.converged);
        assert_eq!(sol.selected_variables, (0..4).filter(|&i| y[i].abs() > 1.0).collect::<Vec<_>>());
    }
}
