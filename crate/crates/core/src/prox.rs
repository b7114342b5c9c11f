//! Proximal mappings of the sorted-L1 (SLOPE) and group sorted-L1 (gSLOPE)
//! penalties.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::GroupPartition;
use crate::error::{Result, SgsError};

/// A non-negative, non-increasing weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SortedWeights(Vec<f64>);

impl SortedWeights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SgsError::WeightOrderViolation(i));
            }
            if i > 0 && v > values[i - 1] {
                return Err(SgsError::WeightOrderViolation(i));
            }
        }
        Ok(Self(values))
    }

    /// Clips negative entries to zero, then validates the ordering.
    pub fn clipped(values: Vec<f64>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        debug_assert!(factor >= 0.0);
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// The diagonal of `D`: `sqrt(p_g)` for every variable of group `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupScaling {
    diag: DVector<f64>,
}

impl GroupScaling {
    pub fn new(partition: &GroupPartition) -> Self {
        let diag = DVector::from_iterator(
            partition.num_variables(),
            partition
                .assignments()
                .iter()
                .map(|&g| (partition.size(g) as f64).sqrt()),
        );
        Self { diag }
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }
}

/// Order of indices by decreasing magnitude; ties keep index order.
fn order_by_magnitude_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order
}

/// Proximal map of `z -> sum_i weights_i |z|_(i)`.
///
/// Sorts `|x|` in decreasing order, fits the non-increasing sequence closest
/// to `|x|_(i) - weights_i` by pooling adjacent violators, clips at zero and
/// restores order and signs.
pub fn prox_slope(x: &[f64], weights: &SortedWeights) -> Result<Vec<f64>> {
    let k = x.len();
    if weights.len() != k {
        return Err(SgsError::LengthMismatch {
            expected: k,
            found: weights.len(),
        });
    }
    let order = order_by_magnitude_desc(x);
    let w = weights.values();

    // blocks of pooled positions: (start, end exclusive, sum of differences)
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(k);
    for (pos, &i) in order.iter().enumerate() {
        blocks.push((pos, pos + 1, x[i].abs() - w[pos]));
        while blocks.len() > 1 {
            let (s1, e1, sum1) = blocks[blocks.len() - 1];
            let (s0, e0, sum0) = blocks[blocks.len() - 2];
            if sum0 / (e0 - s0) as f64 > sum1 / (e1 - s1) as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0, e1, sum0 + sum1);
        }
    }

    let mut out = vec![0.0; k];
    for (start, end, sum) in blocks {
        let level = (sum / (end - start) as f64).max(0.0);
        if level == 0.0 {
            // every later block is pooled to an even smaller level
            break;
        }
        for &i in &order[start..end] {
            out[i] = level.copysign(x[i]);
        }
    }
    Ok(out)
}

/// Euclidean norm of every group of `x`.
pub fn group_norms(x: &[f64], partition: &GroupPartition) -> Vec<f64> {
    partition
        .groups()
        .map(|members| members.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
        .collect()
}

/// Proximal map of `z -> sum_g weights_g ||z^(g)||_2`, with weights matched to
/// groups in decreasing order of group norm.
pub fn prox_gslope(
    x: &[f64],
    weights: &SortedWeights,
    partition: &GroupPartition,
) -> Result<Vec<f64>> {
    if x.len() != partition.num_variables() {
        return Err(SgsError::LengthMismatch {
            expected: partition.num_variables(),
            found: x.len(),
        });
    }
    let norms = group_norms(x, partition);
    let shrunk = prox_slope(&norms, weights)?;
    let mut out = vec![0.0; x.len()];
    for (g, members) in partition.groups().enumerate() {
        if norms[g] == 0.0 || shrunk[g] == 0.0 {
            continue;
        }
        let factor = shrunk[g] / norms[g];
        for &i in members {
            out[i] = x[i] * factor;
        }
    }
    Ok(out)
}

/// `D^-1 prox_gslope(D b + D^-1 gamma u; gamma w)`: the gSLOPE step of the
/// splitting iteration, evaluated in the `c = D b` coordinates where the group
/// penalty has no size factor.
pub fn prox_gslope_transformed(
    b: &[f64],
    u: &[f64],
    gamma: f64,
    weights: &SortedWeights,
    scaling: &GroupScaling,
    partition: &GroupPartition,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(SgsError::InvalidConfig(format!(
            "step size must be positive, got {gamma}"
        )));
    }
    let p = partition.num_variables();
    for len in [b.len(), u.len(), scaling.diag.len()] {
        if len != p {
            return Err(SgsError::LengthMismatch {
                expected: p,
                found: len,
            });
        }
    }
    let d = scaling.diag.as_slice();
    let input: Vec<f64> = (0..p).map(|i| d[i] * b[i] + gamma * u[i] / d[i]).collect();
    let mut out = prox_gslope(&input, &weights.scaled(gamma), partition)?;
    for (o, di) in out.iter_mut().zip(d) {
        *o /= di;
    }
    Ok(out)
}

/// `sum_i weights_i |b|_(i)` with the largest magnitude paired to the largest weight.
pub fn sorted_l1(b: &[f64], weights: &SortedWeights) -> f64 {
    let order = order_by_magnitude_desc(b);
    order
        .iter()
        .zip(weights.values())
        .map(|(&i, w)| w * b[i].abs())
        .sum()
}

/// `sum_g weights_g sqrt(p_g) ||b^(g)||` with groups ranked by `sqrt(p_g) ||b^(g)||`.
pub fn group_sorted_l1(b: &[f64], weights: &SortedWeights, partition: &GroupPartition) -> f64 {
    let scaled: Vec<f64> = group_norms(b, partition)
        .into_iter()
        .enumerate()
        .map(|(g, n)| (partition.size(g) as f64).sqrt() * n)
        .collect();
    sorted_l1(&scaled, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn w(v: &[f64]) -> SortedWeights {
        SortedWeights::new(v.to_vec()).unwrap()
    }

    #[test]
    fn weights_must_be_sorted_and_nonnegative() {
        assert_eq!(
            SortedWeights::new(vec![1.0, 2.0]).unwrap_err(),
            SgsError::WeightOrderViolation(1)
        );
        assert_eq!(
            SortedWeights::new(vec![-1.0]).unwrap_err(),
            SgsError::WeightOrderViolation(0)
        );
        assert_eq!(
            SortedWeights::clipped(vec![2.0, -0.5, -1.0]).unwrap().values(),
            &[2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn zero_input_maps_to_zero() {
        let out = prox_slope(&[0.0, 0.0, 0.0], &w(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn zero_weights_are_identity() {
        let x = [1.5, -0.2, 3.0];
        assert_eq!(prox_slope(&x, &SortedWeights::zeros(3)).unwrap(), x.to_vec());
        let part = GroupPartition::from_sizes(&[2, 1]).unwrap();
        assert_eq!(
            prox_gslope(&x, &SortedWeights::zeros(2), &part).unwrap(),
            x.to_vec()
        );
    }

    #[test]
    fn flat_weights_soft_threshold() {
        let x = [3.0, -0.5, -2.0, 0.9, 1.0];
        let out = prox_slope(&x, &w(&[1.0; 5])).unwrap();
        for (o, xi) in out.iter().zip(x) {
            assert_abs_diff_eq!(*o, xi.signum() * (xi.abs() - 1.0).max(0.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn two_dimensional_example_pools() {
        // |x| - w = [2, 0.5] is already decreasing: no pooling needed
        assert_eq!(prox_slope(&[3.0, 1.0], &w(&[1.0, 0.5])).unwrap(), vec![2.0, 0.5]);
        // [1.1 - 1, 1 - 0.2] = [0.1, 0.8] violates order: pooled to 0.45 each
        let out = prox_slope(&[1.1, -1.0], &w(&[1.0, 0.2])).unwrap();
        assert_abs_diff_eq!(out[0], 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], -0.45, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_is_reported() {
        assert!(matches!(
            prox_slope(&[1.0, 2.0], &w(&[1.0])),
            Err(SgsError::LengthMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn single_group_block_soft_threshold() {
        let part = GroupPartition::from_sizes(&[3]).unwrap();
        let x = [3.0, 4.0, 0.0];
        let out = prox_gslope(&x, &w(&[2.5]), &part).unwrap();
        let factor = 1.0 - 2.5 / 5.0;
        for (o, xi) in out.iter().zip(x) {
            assert_abs_diff_eq!(*o, xi * factor, epsilon = 1e-15);
        }
        assert_eq!(prox_gslope(&x, &w(&[6.0]), &part).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn zero_norm_group_stays_zero() {
        let part = GroupPartition::from_sizes(&[2, 2]).unwrap();
        let out = prox_gslope(&[0.0, 0.0, 1.0, 1.0], &w(&[0.1, 0.0]), &part).unwrap();
        assert_eq!(&out[..2], &[0.0, 0.0]);
    }

    #[test]
    fn transformed_prox_with_singletons_is_plain_prox() {
        let part = GroupPartition::singletons(3);
        let scaling = GroupScaling::new(&part);
        let b = [1.0, -2.0, 0.3];
        let weights = w(&[1.0, 0.6, 0.1]);
        let gamma = 0.7;
        let out =
            prox_gslope_transformed(&b, &[0.0; 3], gamma, &weights, &scaling, &part).unwrap();
        let direct = prox_gslope(&b, &weights.scaled(gamma), &part).unwrap();
        assert_eq!(out, direct);
    }

    #[test]
    fn transformed_prox_with_zero_weights() {
        let part = GroupPartition::from_sizes(&[2, 3]).unwrap();
        let scaling = GroupScaling::new(&part);
        let b = [1.0, -2.0, 0.3, 0.0, 4.0];
        let u = [0.5, 0.1, -1.0, 2.0, 0.0];
        let gamma = 0.5;
        let out =
            prox_gslope_transformed(&b, &u, gamma, &SortedWeights::zeros(2), &scaling, &part)
                .unwrap();
        for i in 0..5 {
            let d2 = part.size(part.group_of(i)) as f64;
            assert_abs_diff_eq!(out[i], b[i] + gamma * u[i] / d2, epsilon = 1e-14);
        }
    }

    #[test]
    fn transformed_prox_rejects_nonpositive_step() {
        let part = GroupPartition::singletons(1);
        let scaling = GroupScaling::new(&part);
        assert!(prox_gslope_transformed(&[1.0], &[0.0], 0.0, &w(&[1.0]), &scaling, &part).is_err());
    }

    #[test]
    fn penalty_values() {
        let weights = w(&[3.0, 2.0, 1.0]);
        assert_abs_diff_eq!(sorted_l1(&[1.0, -5.0, 2.0], &weights), 15.0 + 4.0 + 1.0);
        let part = GroupPartition::from_sizes(&[1, 2]).unwrap();
        // group norms scaled by sqrt(size): [2, sqrt(2) * 5]
        let val = group_sorted_l1(&[2.0, 3.0, 4.0], &w(&[2.0, 1.0]), &part);
        assert_abs_diff_eq!(val, 2.0 * 2f64.sqrt() * 5.0 + 2.0, epsilon = 1e-12);
    }

    fn sorted_weights_strategy(k: usize) -> impl Strategy<Value = SortedWeights> {
        proptest::collection::vec(0.0f64..3.0, k).prop_map(|mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            SortedWeights::new(v).unwrap()
        })
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, SortedWeights)> {
        (1usize..8).prop_flat_map(|k| {
            (proptest::collection::vec(-5.0f64..5.0, k), sorted_weights_strategy(k))
        })
    }

    proptest! {
        #[test]
        fn slope_prox_structure((x, weights) in instance()) {
            let z = prox_slope(&x, &weights).unwrap();
            for (zi, xi) in z.iter().zip(&x) {
                prop_assert!(*zi == 0.0 || zi.signum() == xi.signum());
                prop_assert!(zi.abs() <= xi.abs() + 1e-12);
            }
            // magnitudes ordered like the input magnitudes
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if x[i].abs() > x[j].abs() {
                        prop_assert!(z[i].abs() >= z[j].abs() - 1e-12);
                    }
                }
            }
        }

        #[test]
        fn slope_prox_optimality_certificate((x, weights) in instance()) {
            let z = prox_slope(&x, &weights).unwrap();
            let order = order_by_magnitude_desc(&x);
            let mut cum_gap = 0.0;
            let mut cum_w = 0.0;
            for (pos, &i) in order.iter().enumerate() {
                cum_gap += x[i].abs() - z[i].abs();
                cum_w += weights.values()[pos];
                prop_assert!(cum_gap <= cum_w + 1e-9);
                // at the end of a non-zero block the partial sums agree
                let block_ends = pos + 1 == order.len()
                    || (z[order[pos + 1]].abs() - z[i].abs()).abs() > 1e-12;
                if z[i] != 0.0 && block_ends {
                    prop_assert!((cum_gap - cum_w).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn slope_prox_is_nonexpansive(
            (x, weights) in instance(),
            shift in proptest::collection::vec(-2.0f64..2.0, 8),
        ) {
            let y: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let px = prox_slope(&x, &weights).unwrap();
            let py = prox_slope(&y, &weights).unwrap();
            let d_out: f64 = px.iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum();
            let d_in: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(d_out <= d_in + 1e-12);
        }

        #[test]
        fn slope_prox_permutation_equivariant((x, weights) in instance(), rot in 0usize..8) {
            let k = x.len();
            let r = rot % k;
            let perm: Vec<usize> = (0..k).map(|i| (i + r) % k).collect();
            let xp: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let z = prox_slope(&x, &weights).unwrap();
            let zp = prox_slope(&xp, &weights).unwrap();
            for (pos, &i) in perm.iter().enumerate() {
                prop_assert!((zp[pos] - z[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn gslope_prox_group_permutation_equivariant(
            x in proptest::collection::vec(-3.0f64..3.0, 5),
            weights in sorted_weights_strategy(2),
        ) {
            // groups {0,1} and {2,3,4}; swapping them reorders whole blocks
            let part = GroupPartition::from_sizes(&[2, 3]).unwrap();
            let swapped = GroupPartition::from_sizes(&[3, 2]).unwrap();
            let xs: Vec<f64> = [2, 3, 4, 0, 1].iter().map(|&i| x[i]).collect();
            let z = prox_gslope(&x, &weights, &part).unwrap();
            let zs = prox_gslope(&xs, &weights, &swapped).unwrap();
            for (pos, &i) in [2, 3, 4, 0, 1].iter().enumerate() {
                prop_assert!((zs[pos] - z[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn gslope_prox_is_nonexpansive(
            x in proptest::collection::vec(-3.0f64..3.0, 5),
            y in proptest::collection::vec(-3.0f64..3.0, 5),
            weights in sorted_weights_strategy(2),
        ) {
            let part = GroupPartition::from_sizes(&[2, 3]).unwrap();
            let px = prox_gslope(&x, &weights, &part).unwrap();
            let py = prox_gslope(&y, &weights, &part).unwrap();
            let d_out: f64 = px.iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum();
            let d_in: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(d_out <= d_in + 1e-12);
        }

        #[test]
        fn sgs_penalty_is_midpoint_convex(
            a in proptest::collection::vec(-3.0f64..3.0, 6),
            b in proptest::collection::vec(-3.0f64..3.0, 6),
            v in sorted_weights_strategy(6),
            gw in sorted_weights_strategy(3),
            alpha in 0.0f64..=1.0,
        ) {
            let part = GroupPartition::from_sizes(&[1, 2, 3]).unwrap();
            let pen = |x: &[f64]| alpha * sorted_l1(x, &v) + (1.0 - alpha) * group_sorted_l1(x, &gw, &part);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            prop_assert!(pen(&mid) <= 0.5 * (pen(&a) + pen(&b)) + 1e-12);
        }
    }
}
