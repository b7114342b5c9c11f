//! Problem instances: grouped design matrices, responses, standardization and
//! train/test splitting.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgsError};
use crate::rng::child_rng;

/// A strict partition of the variables `0..p` into `m` non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl GroupPartition {
    /// Builds a partition from the group label of every variable. Labels must
    /// cover `0..m` with no empty group.
    pub fn from_assignments(group_of: Vec<usize>) -> Result<Self> {
        if group_of.is_empty() {
            return Err(SgsError::InvalidPartition("no variables".into()));
        }
        let m = group_of.iter().max().map_or(0, |g| g + 1);
        let mut members = vec![Vec::new(); m];
        for (i, &g) in group_of.iter().enumerate() {
            members[g].push(i);
        }
        if let Some(g) = members.iter().position(Vec::is_empty) {
            return Err(SgsError::InvalidPartition(format!("group {g} is empty")));
        }
        Ok(Self { group_of, members })
    }

    /// Builds a partition from explicit member lists, checking that they are
    /// disjoint and cover `0..p` exactly.
    pub fn from_members(members: Vec<Vec<usize>>) -> Result<Self> {
        let p: usize = members.iter().map(Vec::len).sum();
        let mut group_of = vec![usize::MAX; p];
        for (g, list) in members.iter().enumerate() {
            if list.is_empty() {
                return Err(SgsError::InvalidPartition(format!("group {g} is empty")));
            }
            for &i in list {
                if i >= p {
                    return Err(SgsError::InvalidPartition(format!(
                        "variable {i} outside 0..{p} (groups overlap or leave gaps)"
                    )));
                }
                if group_of[i] != usize::MAX {
                    return Err(SgsError::InvalidPartition(format!(
                        "variable {i} belongs to groups {} and {g}",
                        group_of[i]
                    )));
                }
                group_of[i] = g;
            }
        }
        let mut members = members;
        for list in &mut members {
            list.sort_unstable();
        }
        Ok(Self { group_of, members })
    }

    /// Consecutive groups with the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut group_of = Vec::with_capacity(sizes.iter().sum());
        for (g, &s) in sizes.iter().enumerate() {
            if s == 0 {
                return Err(SgsError::InvalidPartition(format!("group {g} is empty")));
            }
            group_of.extend(std::iter::repeat_n(g, s));
        }
        Self::from_assignments(group_of)
    }

    /// Every variable in its own group.
    pub fn singletons(p: usize) -> Self {
        Self {
            group_of: (0..p).collect(),
            members: (0..p).map(|i| vec![i]).collect(),
        }
    }

    pub fn num_variables(&self) -> usize {
        self.group_of.len()
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, variable: usize) -> usize {
        self.group_of[variable]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.group_of
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.members[group]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> {
        self.members.iter().map(Vec::as_slice)
    }

    pub fn size(&self, group: usize) -> usize {
        self.members[group].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Group indices ordered by decreasing size, ties by index.
    pub fn groups_by_size_desc(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_groups()).collect();
        order.sort_by(|&a, &b| self.size(b).cmp(&self.size(a)).then(a.cmp(&b)));
        order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Gaussian,
    Binomial,
}

/// Design matrix, response and grouping of one regression problem.
#[derive(Debug, Clone)]
pub struct GroupedDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    partition: GroupPartition,
    family: Family,
}

impl GroupedDataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        partition: GroupPartition,
        family: Family,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SgsError::DimensionMismatch(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() != partition.num_variables() {
            return Err(SgsError::DimensionMismatch(format!(
                "X has {} columns but the grouping covers {} variables",
                x.ncols(),
                partition.num_variables()
            )));
        }
        if family == Family::Binomial {
            if let Some((row, &value)) = y
                .iter()
                .enumerate()
                .find(|(_, &v)| v != 0.0 && v != 1.0)
            {
                return Err(SgsError::InvalidResponse { row, value });
            }
        }
        Ok(Self {
            x,
            y,
            partition,
            family,
        })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// The rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r])),
            partition: self.partition.clone(),
            family: self.family,
        }
    }
}

/// Column centers and scales applied by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub column_centers: Vec<f64>,
    pub column_scales: Vec<f64>,
    /// Mean of the response for the Gaussian family, zero otherwise.
    pub response_center: f64,
}

impl StandardizationRecord {
    pub fn identity(p: usize) -> Self {
        Self {
            column_centers: vec![0.0; p],
            column_scales: vec![1.0; p],
            response_center: 0.0,
        }
    }

    /// Undoes the transform on a standardized design and response.
    pub fn invert(&self, x_std: &DMatrix<f64>, y_std: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut x = x_std.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (c, s) = (self.column_centers[j], self.column_scales[j]);
            col.apply(|v| *v = *v * s + c);
        }
        let y = y_std.add_scalar(self.response_center);
        (x, y)
    }
}

/// Centers every column to mean zero and scales it to unit Euclidean norm.
/// The Gaussian response is mean-centered; a binomial response is untouched.
pub fn standardize(data: &GroupedDataset) -> Result<(GroupedDataset, StandardizationRecord)> {
    let n = data.n();
    if n < 2 {
        return Err(SgsError::TooFewRows {
            required: 2,
            available: n,
        });
    }
    let mut x = data.x.clone();
    let mut centers = Vec::with_capacity(data.p());
    let mut scales = Vec::with_capacity(data.p());
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        let max_abs = col.amax();
        // relative check: a column of identical values leaves only rounding noise
        if norm == 0.0 || max_abs <= 1e-12 * mean.abs().max(1.0) {
            return Err(SgsError::ConstantColumn(j));
        }
        col.scale_mut(1.0 / norm);
        centers.push(mean);
        scales.push(norm);
    }
    let (y, response_center) = match data.family {
        Family::Gaussian => {
            let mean = data.y.mean();
            (data.y.add_scalar(-mean), mean)
        }
        Family::Binomial => (data.y.clone(), 0.0),
    };
    let record = StandardizationRecord {
        column_centers: centers,
        column_scales: scales,
        response_center,
    };
    let out = GroupedDataset {
        x,
        y,
        partition: data.partition.clone(),
        family: data.family,
    };
    Ok((out, record))
}

/// Maps coefficients fitted on standardized data back to the original scale.
pub fn unstandardize_coefficients(
    beta_std: &DVector<f64>,
    intercept_std: f64,
    record: &StandardizationRecord,
) -> Result<(DVector<f64>, f64)> {
    let p = beta_std.len();
    if record.column_centers.len() != p || record.column_scales.len() != p {
        return Err(SgsError::DimensionMismatch(format!(
            "record covers {} columns, coefficients have {p}",
            record.column_centers.len()
        )));
    }
    let beta = DVector::from_iterator(
        p,
        beta_std
            .iter()
            .zip(&record.column_scales)
            .map(|(b, s)| b / s),
    );
    let shift: f64 = beta
        .iter()
        .zip(&record.column_centers)
        .map(|(b, c)| b * c)
        .sum();
    Ok((beta, record.response_center + intercept_std - shift))
}

/// Random disjoint train/test split of the rows.
pub fn split(
    data: &GroupedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(GroupedDataset, GroupedDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SgsError::InvalidConfig(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.n();
    let n_test = (test_fraction * n as f64).round() as usize;
    let n_train = n.saturating_sub(n_test);
    if n_train < 2 || n_test == 0 {
        return Err(SgsError::TooFewRows {
            required: 2,
            available: n_train,
        });
    }
    let (train, test) = split_indices(n, n_test, seed);
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

/// Row indices of a seeded split, each side sorted ascending.
pub fn split_indices(n: usize, n_test: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut child_rng(seed, crate::rng::Stream::Split, 0));
    let mut test = rows[..n_test].to_vec();
    let mut train = rows[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}
