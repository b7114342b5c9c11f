//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sgs_core::prox::{prox_slope, SortedWeights};

/// Every split of `0..k` into consecutive blocks, as lists of block ends.
fn block_patterns(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (0..1u64 << (k - 1))
        .map(|mask| {
            let mut ends = Vec::new();
            for pos in 0..k - 1 {
                if mask & (1 << pos) != 0 {
                    ends.push(pos + 1);
                }
            }
            ends.push(k);
            ends
        })
        .collect()
}

/// Minimizes `sum_j c_j (s_j - a_j)^2 / 2 + sum_j w_j s_j` over
/// `s_1 >= s_2 >= ... >= s_k >= 0` by trying every pattern of active
/// constraints: blocks of equal values followed by an all-zero tail.
pub fn weighted_monotone_brute(a: &[f64], c: &[f64], w: &[f64]) -> Vec<f64> {
    let k = a.len();
    let objective = |s: &[f64]| -> f64 {
        (0..k).map(|j| 0.5 * c[j] * (s[j] - a[j]).powi(2) + w[j] * s[j]).sum()
    };
    let mut best = vec![0.0; k];
    let mut best_val = objective(&best);
    for tail in 0..=k {
        for ends in block_patterns(tail) {
            let mut s = vec![0.0; k];
            let mut start = 0;
            let mut ok = true;
            for &end in &ends {
                let num: f64 = (start..end).map(|j| c[j] * a[j] - w[j]).sum();
                let den: f64 = (start..end).map(|j| c[j]).sum();
                let level = num / den;
                if level < 0.0 {
                    ok = false;
                    break;
                }
                for v in &mut s[start..end] {
                    *v = level;
                }
                start = end;
            }
            if !ok || s.windows(2).any(|p| p[0] < p[1] - 1e-15) {
                continue;
            }
            let val = objective(&s);
            if val < best_val {
                best_val = val;
                best = s;
            }
        }
    }
    best
}

fn order_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));
    order
}

/// Brute-force prox of the sorted L1 norm.
pub fn brute_prox_slope(x: &[f64], w: &[f64]) -> Vec<f64> {
    let order = order_desc(x);
    let a: Vec<f64> = order.iter().map(|&i| x[i].abs()).collect();
    let s = weighted_monotone_brute(&a, &vec![1.0; x.len()], w);
    let mut out = vec![0.0; x.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = s[pos] * x[i].signum();
    }
    out
}

fn norms(x: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    groups
        .iter()
        .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
        .collect()
}

/// Brute-force prox of `sum_r w_r ||x^(g)||_(r)`.
pub fn brute_prox_gslope(x: &[f64], w: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let n = norms(x, groups);
    let shrunk = brute_prox_slope(&n, w);
    let mut out = vec![0.0; x.len()];
    for (g, members) in groups.iter().enumerate() {
        if n[g] > 0.0 {
            for &i in members {
                out[i] = x[i] * shrunk[g] / n[g];
            }
        }
    }
    out
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, k - 1);
            out.push(p);
        }
    }
    out
}

/// Exact prox of `sum_r w_r s_(r)` with `s_g = sqrt(p_g) ||x^(g)||`: enumerate
/// the rank order of the groups, then the block structure within it.
pub fn brute_prox_group_term(x: &[f64], w: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let n = norms(x, groups);
    let m = groups.len();
    let root: Vec<f64> = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
    let value = |s: &[f64]| -> f64 {
        // s in group order; recompute the true sorted penalty
        let mut sorted: Vec<f64> = s.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let pen: f64 = sorted.iter().zip(w).map(|(a, b)| a * b).sum();
        let fit: f64 = (0..m).map(|g| 0.5 * (s[g] / root[g] - n[g]).powi(2)).sum();
        fit + pen
    };
    let mut best = vec![0.0; m];
    let mut best_val = value(&best);
    for perm in permutations(m) {
        // in rank order: c = 1/p_g, a = sqrt(p_g) n_g
        let a: Vec<f64> = perm.iter().map(|&g| root[g] * n[g]).collect();
        let c: Vec<f64> = perm.iter().map(|&g| 1.0 / (root[g] * root[g])).collect();
        let s_ranked = weighted_monotone_brute(&a, &c, w);
        let mut s = vec![0.0; m];
        for (r, &g) in perm.iter().enumerate() {
            s[g] = s_ranked[r];
        }
        let val = value(&s);
        if val < best_val {
            best_val = val;
            best = s;
        }
    }
    let mut out = vec![0.0; x.len()];
    for (g, members) in groups.iter().enumerate() {
        if n[g] > 0.0 {
            let t = best[g] / root[g];
            for &i in members {
                out[i] = x[i] * t / n[g];
            }
        }
    }
    out
}

/// The sparse-group SLOPE objective, evaluated from scratch.
pub fn sgs_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    b: &[f64],
    intercept: f64,
    v: &[f64],
    w: &[f64],
    groups: &[Vec<usize>],
) -> f64 {
    let n = y.len() as f64;
    let mut rss = 0.0;
    for r in 0..x.nrows() {
        let fit: f64 = (0..x.ncols()).map(|j| x[(r, j)] * b[j]).sum::<f64>() + intercept;
        rss += (y[r] - fit).powi(2);
    }
    let mut mags: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let var_pen: f64 = mags.iter().zip(v).map(|(a, b)| a * b).sum();
    let mut gs: Vec<f64> = norms(b, groups)
        .iter()
        .zip(groups)
        .map(|(nm, g)| nm * (g.len() as f64).sqrt())
        .collect();
    gs.sort_by(|a, b| b.total_cmp(a));
    let grp_pen: f64 = gs.iter().zip(w).map(|(a, b)| a * b).sum();
    rss / (2.0 * n) + var_pen + grp_pen
}

/// Consensus ADMM for `|y - X b|^2 / 2n + sorted-L1(v) + group term(w)`
/// (no intercept). The sorted-L1 prox is the library's, which the prox
/// acceptance tests certify against [`brute_prox_slope`]; the group prox is
/// the brute-force one.
pub fn admm_reference(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    v: &[f64],
    w: &[f64],
    groups: &[Vec<usize>],
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let n = y.len() as f64;
    let p = x.ncols();
    let gram = x.transpose() * x / n + DMatrix::<f64>::identity(p, p) * rho;
    let chol = gram.cholesky().expect("positive definite");
    let xty = x.transpose() * y / n;
    let vr = SortedWeights::new(v.iter().map(|a| a / rho).collect()).unwrap();
    let wr: Vec<f64> = w.iter().map(|a| a / rho).collect();
    let mut z = DVector::zeros(p);
    let mut u = [DVector::zeros(p), DVector::zeros(p), DVector::zeros(p)];
    for _ in 0..max_iter {
        let x1 = chol.solve(&(&xty + (&z - &u[0]) * rho));
        let arg2 = &z - &u[1];
        let x2 = DVector::from_vec(prox_slope(arg2.as_slice(), &vr).unwrap());
        let arg3 = &z - &u[2];
        let x3 = DVector::from_vec(brute_prox_group_term(arg3.as_slice(), &wr, groups));
        let z_old = z.clone();
        z = (&x1 + &u[0] + &x2 + &u[1] + &x3 + &u[2]) / 3.0;
        u[0] += &x1 - &z;
        u[1] += &x2 - &z;
        u[2] += &x3 - &z;
        let primal = (&x1 - &z).norm() + (&x2 - &z).norm() + (&x3 - &z).norm();
        let dual = rho * (&z - &z_old).norm();
        if primal < tol && dual < tol {
            // the prox iterates carry the exact sparsity pattern
            let mut out: Vec<f64> = x2.iter().copied().collect();
            for (i, o) in out.iter_mut().enumerate() {
                if x3[i] == 0.0 {
                    *o = 0.0;
                }
            }
            return out;
        }
    }
    z.iter().copied().collect()
}
