//! Distribution functions behind the penalty sequences: the standard normal,
//! the chi distribution, and the sum of i.i.d. folded standard normals.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::gamma_lr;

use crate::error::{Result, SgsError};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn normal_quantile(prob: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * prob);
    if !x.is_finite() {
        return x;
    }
    // Newton polish, evaluated on the smaller tail to avoid cancellation
    for _ in 0..2 {
        let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density <= 0.0 {
            break;
        }
        let residual = if prob > 0.5 {
            (1.0 - prob) - normal_cdf(-x)
        } else {
            normal_cdf(x) - prob
        };
        x -= residual / density;
    }
    x
}

/// CDF of the chi distribution with `dof` degrees of freedom.
pub fn chi_cdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(dof as f64 / 2.0, x * x / 2.0)
}

pub fn chi_quantile(prob: f64, dof: usize) -> Result<f64> {
    if dof == 1 {
        // |Z| for standard normal Z
        return Ok(normal_quantile(0.5 + prob / 2.0));
    }
    invert_increasing(|x| chi_cdf(x, dof), prob, 0.0, (dof as f64).sqrt() + 1.0)
}

/// Grid spacing of the tabulated folded-sum distribution.
const FOLDED_STEP: f64 = 0.005;
/// Beyond this a single folded normal has mass below 1e-18.
const FOLDED_SUPPORT: f64 = 9.0;

/// Distribution of `|Z_1| + ... + |Z_k|`, tabulated by discretizing one
/// folded normal on a grid and taking its k-fold convolution with an FFT.
/// Each lattice atom is spread uniformly over its cell, so the CDF is
/// continuous and piecewise linear.
#[derive(Debug)]
struct FoldedSumTable {
    /// CDF at the cell edges `first_edge + j * FOLDED_STEP`.
    edge_cdf: Vec<f64>,
    first_edge: f64,
}

impl FoldedSumTable {
    fn build(k: usize) -> Self {
        let h = FOLDED_STEP;
        let cells = (FOLDED_SUPPORT / h).ceil() as usize;
        let single: Vec<f64> = (0..cells)
            .map(|j| erf((j + 1) as f64 * h / SQRT_2) - erf(j as f64 * h / SQRT_2))
            .collect();
        let len = (k * (cells - 1) + 1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut buf: Vec<Complex<f64>> = single
            .iter()
            .map(|&m| Complex::new(m, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(len)
            .collect();
        forward.process(&mut buf);
        for c in &mut buf {
            *c = c.powu(k as u32);
        }
        inverse.process(&mut buf);
        let scale = 1.0 / len as f64;
        let atoms = k * (cells - 1) + 1;
        let masses: Vec<f64> = buf[..atoms]
            .iter()
            .map(|c| (c.re * scale).max(0.0))
            .collect();
        let total: f64 = masses.iter().sum();
        let mut edge_cdf = Vec::with_capacity(atoms + 1);
        let mut acc = 0.0;
        edge_cdf.push(0.0);
        for m in &masses {
            acc += m / total;
            edge_cdf.push(acc.min(1.0));
        }
        // atom j sits at h * (j + k / 2): the sum of k cell midpoints
        let first_edge = h * (k as f64 / 2.0) - h / 2.0;
        Self {
            edge_cdf,
            first_edge,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        let pos = (x - self.first_edge) / FOLDED_STEP;
        if pos <= 0.0 {
            return 0.0;
        }
        let j = pos.floor() as usize;
        if j + 1 >= self.edge_cdf.len() {
            return 1.0;
        }
        let frac = pos - j as f64;
        self.edge_cdf[j] + frac * (self.edge_cdf[j + 1] - self.edge_cdf[j])
    }
}

fn folded_table(k: usize) -> Arc<FoldedSumTable> {
    static TABLES: OnceLock<Mutex<HashMap<usize, Arc<FoldedSumTable>>>> = OnceLock::new();
    let tables = TABLES.get_or_init(Default::default);
    if let Some(t) = tables.lock().unwrap().get(&k) {
        return Arc::clone(t);
    }
    let table = Arc::new(FoldedSumTable::build(k));
    tables
        .lock()
        .unwrap()
        .entry(k)
        .or_insert(table)
        .clone()
}

/// CDF of the sum of `group_size` i.i.d. folded standard normals.
pub fn folded_sum_cdf(x: f64, group_size: usize) -> f64 {
    assert!(group_size >= 1, "group size must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if group_size == 1 {
        return erf(x / SQRT_2);
    }
    folded_table(group_size).cdf(x)
}

pub fn folded_sum_quantile(prob: f64, group_size: usize) -> Result<f64> {
    if group_size == 1 {
        return Ok(normal_quantile(0.5 + prob / 2.0));
    }
    let mean = group_size as f64 * (2.0 / std::f64::consts::PI).sqrt();
    invert_increasing(|x| folded_sum_cdf(x, group_size), prob, 0.0, mean + 1.0)
}

const MAX_BISECTIONS: usize = 200;
const BRACKET_WIDTH: f64 = 1e-12;

/// Solves `cdf(x) = target` for a non-decreasing `cdf` by bisection.
///
/// `lo` must satisfy `cdf(lo) <= target`; the upper end starts at `hi` and is
/// doubled until it brackets the root.
pub fn invert_increasing(
    cdf: impl Fn(f64) -> f64,
    target: f64,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) || cdf(lo) > target {
        return Err(SgsError::RootBracketFailure { target });
    }
    let mut lo = lo;
    let mut hi = hi.max(lo + 1.0);
    let mut doublings = 0;
    while cdf(hi) < target {
        lo = hi;
        hi = 2.0 * hi + 1.0;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(SgsError::RootBracketFailure { target });
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= BRACKET_WIDTH * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The three quantile functions used to build penalty sequences.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistributionOracles;

impl DistributionOracles {
    pub fn normal_quantile(&self, prob: f64) -> f64 {
        normal_quantile(prob)
    }

    pub fn chi_quantile(&self, prob: f64, dof: usize) -> Result<f64> {
        chi_quantile(prob, dof)
    }

    pub fn folded_sum_quantile(&self, prob: f64, group_size: usize) -> Result<f64> {
        folded_sum_quantile(prob, group_size)
    }
}
