//! Penalty weight sequences: SLOPE BH, the gSLOPE max/mean sequences, and
//! the sparse-group vMax/gMax/vMean/gMean sequences that control the
//! variable and group FDR under orthogonal designs.
//!
//! The sparse-group sequences are written in their lambda-scaled form.
//! `lambda` there is the noise-scale parameter of the sequence and is
//! independent of the objective's lambda (which also absorbs the `1/n` of
//! the loss). With `lambda = 1` they reduce to the unscaled forms.

use serde::{Deserialize, Serialize};

use crate::data::GroupPartition;
use crate::distributions::{
    chi_cdf, chi_quantile, folded_sum_cdf, folded_sum_quantile, invert_increasing, normal_cdf,
    normal_quantile,
};
use crate::error::{Result, SgsError};
use crate::prox::SortedWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableSequence {
    Bh,
    VMax,
    VMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupSequence {
    #[serde(rename = "gslope-max")]
    GSlopeMax,
    #[serde(rename = "gslope-mean")]
    GSlopeMean,
    GMax,
    GMean,
}

/// Which count divides `q_g i` in the gMean quantile argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroupDenominator {
    /// `1 - q_g i / m`, matching the gMax sequence.
    #[default]
    Groups,
    /// `1 - q_g i / p`.
    Variables,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceOptions {
    /// Noise-scale parameter of the lambda-scaled sequences.
    pub scale: f64,
    pub gmean_denominator: GroupDenominator,
    /// Alternate the vMax/gMax (or mean) updates until they stop changing,
    /// instead of the single pass BH -> group -> variable.
    pub fixed_point: bool,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            scale: 1.0,
            gmean_denominator: GroupDenominator::Groups,
            fixed_point: false,
        }
    }
}

const FIXED_POINT_ROUNDS: usize = 20;
const FIXED_POINT_TOL: f64 = 1e-8;

/// Penalty configuration of one sparse-group SLOPE fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub alpha: f64,
    /// Objective multiplier of the penalty.
    pub lambda: f64,
    pub q_v: f64,
    pub q_g: f64,
    pub variable_sequence_kind: VariableSequence,
    pub group_sequence_kind: GroupSequence,
    pub v: SortedWeights,
    pub w: SortedWeights,
}

impl PenaltySpec {
    /// A spec with explicit weights, for custom penalties and reductions.
    pub fn custom(alpha: f64, lambda: f64, v: SortedWeights, w: SortedWeights) -> Result<Self> {
        check_alpha_closed(alpha)?;
        if !(lambda >= 0.0) {
            return Err(SgsError::InvalidConfig(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        Ok(Self {
            alpha,
            lambda,
            q_v: f64::NAN,
            q_g: f64::NAN,
            variable_sequence_kind: VariableSequence::Bh,
            group_sequence_kind: GroupSequence::GSlopeMean,
            v,
            w,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    /// Weights of the sorted-L1 term as they enter the objective: `lambda alpha v`.
    pub fn variable_weights(&self) -> SortedWeights {
        self.v.scaled(self.lambda * self.alpha)
    }

    /// Weights of the group term as they enter the objective: `lambda (1 - alpha) w`.
    pub fn group_weights(&self) -> SortedWeights {
        self.w.scaled(self.lambda * (1.0 - self.alpha))
    }
}

fn check_fdr(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(SgsError::InvalidFdrLevel(q))
    }
}

fn check_alpha_closed(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(SgsError::AlphaOutOfRange {
            alpha,
            allowed: "[0, 1]",
        })
    }
}

fn check_scale(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SgsError::InvalidConfig(format!(
            "sequence lambda must be positive, got {lambda}"
        )))
    }
}

/// `v_i = Phi^-1(1 - q_v i / 2p)`.
pub fn slope_bh_sequence(p: usize, q_v: f64) -> Result<SortedWeights> {
    check_fdr(q_v)?;
    if p == 0 {
        return Err(SgsError::InvalidConfig("p must be at least 1".into()));
    }
    let values = (1..=p)
        .map(|i| normal_quantile(1.0 - q_v * i as f64 / (2.0 * p as f64)))
        .collect();
    SortedWeights::new(values)
}

/// Distinct group sizes, largest first.
fn distinct_sizes(partition: &GroupPartition) -> Vec<usize> {
    let mut sizes = partition.sizes();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes.dedup();
    sizes
}

/// `w_i = max_j chi_{p_j}^-1(1 - q_g i / m) / sqrt(p_j)`.
pub fn gslope_max_sequence(partition: &GroupPartition, q_g: f64) -> Result<SortedWeights> {
    check_fdr(q_g)?;
    let m = partition.num_groups();
    let sizes = distinct_sizes(partition);
    let mut values = Vec::with_capacity(m);
    for i in 1..=m {
        let prob = 1.0 - q_g * i as f64 / m as f64;
        let mut best = f64::NEG_INFINITY;
        for &s in &sizes {
            best = best.max(chi_quantile(prob, s)? / (s as f64).sqrt());
        }
        values.push(best);
    }
    SortedWeights::clipped(values)
}

/// Solves `(1/m) sum_j F_chi_{p_j}(sqrt(p_j) w_i) = 1 - q_g i / m`.
pub fn gslope_mean_sequence(partition: &GroupPartition, q_g: f64) -> Result<SortedWeights> {
    check_fdr(q_g)?;
    let m = partition.num_groups();
    let sizes = partition.sizes();
    let averaged = |x: f64| {
        sizes
            .iter()
            .map(|&s| chi_cdf((s as f64).sqrt() * x, s))
            .sum::<f64>()
            / m as f64
    };
    let values = (1..=m)
        .map(|i| solve_averaged(&averaged, 1.0 - q_g * i as f64 / m as f64, 1.0))
        .collect::<Result<Vec<_>>>()?;
    SortedWeights::clipped(values)
}

/// Root of a non-decreasing averaged CDF, clipped at zero when the CDF
/// already exceeds the target there.
fn solve_averaged(cdf: &impl Fn(f64) -> f64, target: f64, hint: f64) -> Result<f64> {
    if cdf(0.0) >= target {
        return Ok(0.0);
    }
    invert_increasing(cdf, target, 0.0, hint.max(1.0))
}

/// Number of active variables expected in an active group of `size`:
/// `floor(alpha * size)`, at least one.
pub fn active_estimate(alpha: f64, size: usize) -> f64 {
    // the small offset keeps products like 0.6 * 5 from rounding down to 2
    ((alpha * size as f64 + 1e-9).floor()).max(1.0)
}

/// `(a_j, w_j)` pairs: the j-th largest group gets the j-th group weight.
fn group_weight_pairs(partition: &GroupPartition, alpha: f64, w: &SortedWeights) -> Result<Vec<(f64, f64)>> {
    if w.len() != partition.num_groups() {
        return Err(SgsError::LengthMismatch {
            expected: partition.num_groups(),
            found: w.len(),
        });
    }
    Ok(partition
        .groups_by_size_desc()
        .into_iter()
        .zip(w.values())
        .map(|(g, &wj)| (active_estimate(alpha, partition.size(g)), wj))
        .collect())
}

fn check_variable_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(SgsError::AlphaOutOfRange {
            alpha,
            allowed: "(0, 1]",
        })
    }
}

fn check_group_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(SgsError::AlphaOutOfRange {
            alpha,
            allowed: "[0, 1)",
        })
    }
}

/// Unclipped vMax values; exposed for the scale-coherence check.
pub fn sgs_vmax_raw(
    partition: &GroupPartition,
    alpha: f64,
    lambda: f64,
    q_v: f64,
    w: &SortedWeights,
) -> Result<Vec<f64>> {
    check_variable_alpha(alpha)?;
    check_fdr(q_v)?;
    check_scale(lambda)?;
    let p = partition.num_variables();
    let pairs = group_weight_pairs(partition, alpha, w)?;
    // the maximum over groups is attained where a_j w_j is smallest
    let min_coupling = pairs
        .iter()
        .map(|(a, wj)| (1.0 - alpha) * lambda * a * wj / 3.0)
        .fold(f64::INFINITY, f64::min);
    Ok((1..=p)
        .map(|i| {
            let z = normal_quantile(1.0 - q_v * i as f64 / (2.0 * p as f64));
            (z - min_coupling) / (alpha * lambda)
        })
        .collect())
}

/// `v_i = max_j (Phi^-1(1 - q_v i / 2p) - (1 - alpha) lambda a_j w_j / 3) / (alpha lambda)`.
pub fn sgs_vmax_sequence(
    partition: &GroupPartition,
    alpha: f64,
    lambda: f64,
    q_v: f64,
    w: &SortedWeights,
) -> Result<SortedWeights> {
    SortedWeights::clipped(sgs_vmax_raw(partition, alpha, lambda, q_v, w)?)
}

/// `(p_j, sum_{k in G_j} v_k)` per group, with groups ranked by decreasing
/// size taking consecutive blocks of the variable weights.
fn group_weight_blocks(partition: &GroupPartition, v: &SortedWeights) -> Vec<(usize, f64)> {
    let mut offset = 0;
    partition
        .groups_by_size_desc()
        .into_iter()
        .map(|g| {
            let size = partition.size(g);
            let block = v.values()[offset..offset + size].iter().sum();
            offset += size;
            (size, block)
        })
        .collect()
}

/// `w_i = max_j (F_FN,p_j^-1(1 - q_g i / m) - alpha lambda sum_{k in G_j} v_k) / ((1 - alpha) lambda p_j)`.
pub fn sgs_gmax_sequence(
    partition: &GroupPartition,
    alpha: f64,
    lambda: f64,
    q_g: f64,
    v: &SortedWeights,
) -> Result<SortedWeights> {
    check_group_alpha(alpha)?;
    check_fdr(q_g)?;
    check_scale(lambda)?;
    if v.len() != partition.num_variables() {
        return Err(SgsError::LengthMismatch {
            expected: partition.num_variables(),
            found: v.len(),
        });
    }
    let m = partition.num_groups();
    let sizes = distinct_sizes(partition);
    // for each size, the smallest block is the one that attains the maximum
    let smallest_block: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            group_weight_blocks(partition, v)
                .into_iter()
                .filter(|&(size, _)| size == s)
                .map(|(_, block)| block)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut values = Vec::with_capacity(m);
    for i in 1..=m {
        let prob = 1.0 - q_g * i as f64 / m as f64;
        let mut best = f64::NEG_INFINITY;
        for (&s, &block) in sizes.iter().zip(&smallest_block) {
            let numer = folded_sum_quantile(prob, s)? - alpha * lambda * block;
            best = best.max(numer / ((1.0 - alpha) * lambda * s as f64));
        }
        values.push(best);
    }
    SortedWeights::clipped(values)
}

/// Solves `(1/m) sum_j Phi(alpha lambda v_i + (1 - alpha) lambda a_j w_j / 3) = 1 - q_v i / 2p`.
pub fn sgs_vmean_sequence(
    partition: &GroupPartition,
    alpha: f64,
    lambda: f64,
    q_v: f64,
    w: &SortedWeights,
) -> Result<SortedWeights> {
    check_variable_alpha(alpha)?;
    check_fdr(q_v)?;
    check_scale(lambda)?;
    let p = partition.num_variables();
    let couplings: Vec<f64> = group_weight_pairs(partition, alpha, w)?
        .into_iter()
        .map(|(a, wj)| (1.0 - alpha) * lambda * a * wj / 3.0)
        .collect();
    let m = couplings.len() as f64;
    let averaged = |x: f64| {
        couplings
            .iter()
            .map(|c| normal_cdf(alpha * lambda * x + c))
            .sum::<f64>()
            / m
    };
    let hint = 2.0 * normal_quantile(1.0 - q_v / (2.0 * p as f64)) / (alpha * lambda);
    let values = (1..=p)
        .map(|i| solve_averaged(&averaged, 1.0 - q_v * i as f64 / (2.0 * p as f64), hint))
        .collect::<Result<Vec<_>>>()?;
    SortedWeights::clipped(values)
}

/// Solves `(1/m) sum_j F_FN,p_j((1 - alpha) lambda p_j w_i + alpha lambda sum_{k in G_j} v_k) = 1 - q_g i / D`
/// with `D` the number of groups (default) or variables.
pub fn sgs_gmean_sequence(
    partition: &GroupPartition,
    alpha: f64,
    lambda: f64,
    q_g: f64,
    v: &SortedWeights,
    denominator: GroupDenominator,
) -> Result<SortedWeights> {
    check_group_alpha(alpha)?;
    check_fdr(q_g)?;
    check_scale(lambda)?;
    if v.len() != partition.num_variables() {
        return Err(SgsError::LengthMismatch {
            expected: partition.num_variables(),
            found: v.len(),
        });
    }
    let m = partition.num_groups();
    let terms: Vec<(usize, f64)> = group_weight_blocks(partition, v)
        .into_iter()
        .map(|(s, block)| (s, alpha * lambda * block))
        .collect();
    let averaged = |x: f64| {
        terms
            .iter()
            .map(|&(s, shift)| folded_sum_cdf((1.0 - alpha) * lambda * s as f64 * x + shift, s))
            .sum::<f64>()
            / m as f64
    };
    let denom = match denominator {
        GroupDenominator::Groups => m,
        GroupDenominator::Variables => partition.num_variables(),
    } as f64;
    let values = (1..=m)
        .map(|i| solve_averaged(&averaged, 1.0 - q_g * i as f64 / denom, 1.0 / ((1.0 - alpha) * lambda)))
        .collect::<Result<Vec<_>>>()?;
    SortedWeights::clipped(values)
}

fn variable_sequence(
    kind: VariableSequence,
    partition: &GroupPartition,
    alpha: f64,
    q_v: f64,
    w: &SortedWeights,
    opts: &SequenceOptions,
) -> Result<SortedWeights> {
    match kind {
        VariableSequence::Bh => slope_bh_sequence(partition.num_variables(), q_v),
        // without a variable term there is nothing to adjust
        _ if alpha == 0.0 => slope_bh_sequence(partition.num_variables(), q_v),
        VariableSequence::VMax => sgs_vmax_sequence(partition, alpha, opts.scale, q_v, w),
        VariableSequence::VMean => sgs_vmean_sequence(partition, alpha, opts.scale, q_v, w),
    }
}

fn group_sequence(
    kind: GroupSequence,
    partition: &GroupPartition,
    alpha: f64,
    q_g: f64,
    v: &SortedWeights,
    opts: &SequenceOptions,
) -> Result<SortedWeights> {
    match kind {
        GroupSequence::GSlopeMax => gslope_max_sequence(partition, q_g),
        GroupSequence::GSlopeMean => gslope_mean_sequence(partition, q_g),
        // without a group term the gSLOPE sequence stands in
        GroupSequence::GMax if alpha == 1.0 => gslope_max_sequence(partition, q_g),
        GroupSequence::GMean if alpha == 1.0 => gslope_mean_sequence(partition, q_g),
        GroupSequence::GMax => sgs_gmax_sequence(partition, alpha, opts.scale, q_g, v),
        GroupSequence::GMean => {
            sgs_gmean_sequence(partition, alpha, opts.scale, q_g, v, opts.gmean_denominator)
        }
    }
}

fn max_abs_diff(a: &SortedWeights, b: &SortedWeights) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Generates both weight vectors for the requested pairing.
///
/// Sequences that depend on each other are resolved in a fixed order: the
/// group sequence is built from the SLOPE BH variable weights, then the
/// variable sequence from that group sequence.
pub fn build_penalty_spec(
    partition: &GroupPartition,
    alpha: f64,
    lambda: f64,
    q_v: f64,
    q_g: f64,
    variable_kind: VariableSequence,
    group_kind: GroupSequence,
    opts: &SequenceOptions,
) -> Result<PenaltySpec> {
    check_alpha_closed(alpha)?;
    check_fdr(q_v)?;
    check_fdr(q_g)?;
    check_scale(opts.scale)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SgsError::InvalidConfig(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    let group_needs_v = matches!(group_kind, GroupSequence::GMax | GroupSequence::GMean);
    let bh = slope_bh_sequence(partition.num_variables(), q_v)?;
    let (v, w) = if variable_kind == VariableSequence::Bh {
        let w = group_sequence(group_kind, partition, alpha, q_g, &bh, opts)?;
        (bh, w)
    } else if !group_needs_v {
        let w = group_sequence(group_kind, partition, alpha, q_g, &bh, opts)?;
        let v = variable_sequence(variable_kind, partition, alpha, q_v, &w, opts)?;
        (v, w)
    } else {
        let mut w = group_sequence(group_kind, partition, alpha, q_g, &bh, opts)?;
        let mut v = variable_sequence(variable_kind, partition, alpha, q_v, &w, opts)?;
        if opts.fixed_point {
            for _ in 0..FIXED_POINT_ROUNDS {
                let w_next = group_sequence(group_kind, partition, alpha, q_g, &v, opts)?;
                let v_next = variable_sequence(variable_kind, partition, alpha, q_v, &w_next, opts)?;
                let change = max_abs_diff(&w, &w_next).max(max_abs_diff(&v, &v_next));
                w = w_next;
                v = v_next;
                if change < FIXED_POINT_TOL {
                    break;
                }
            }
        }
        (v, w)
    };
    Ok(PenaltySpec {
        alpha,
        lambda,
        q_v,
        q_g,
        variable_sequence_kind: variable_kind,
        group_sequence_kind: group_kind,
        v,
        w,
    })
}
