mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sgs_core::data::{Family, GroupPartition, GroupedDataset};
use sgs_core::penalty::PenaltySpec;
use sgs_core::prox::SortedWeights;
use sgs_core::solver::{atos_fit, SolverConfig};

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[test]
fn matches_admm_reference_on_small_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for rep in 0..10 {
        let (n, p) = (20, 10);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let beta: Vec<f64> = (0..p).map(|j| if j % 3 == 0 { 2.0 } else { 0.0 }).collect();
        let y = DVector::from_fn(n, |i, _| {
            (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal)
        });
        let partition = GroupPartition::from_sizes(&[3, 3, 4]).unwrap();
        let groups: Vec<Vec<usize>> = partition.groups().map(|g| g.to_vec()).collect();
        let alpha = rng.random_range(0.05..0.95);
        let lambda = rng.random_range(0.05..0.6);
        let v = sorted_desc((0..p).map(|_| rng.random_range(0.0..1.0)).collect());
        let w = sorted_desc((0..3).map(|_| rng.random_range(0.0..1.0)).collect());
        let spec = PenaltySpec::custom(
            alpha,
            lambda,
            SortedWeights::new(v.clone()).unwrap(),
            SortedWeights::new(w.clone()).unwrap(),
        )
        .unwrap();
        let data = GroupedDataset::new(x.clone(), y.clone(), partition, Family::Gaussian).unwrap();
        let config = SolverConfig {
            fit_intercept: false,
            tolerance: 1e-10,
            max_iterations: 200_000,
            ..SolverConfig::default()
        };
        let sol = atos_fit(&data, &spec, &config).unwrap();
        let ve: Vec<f64> = v.iter().map(|a| a * lambda * alpha).collect();
        let we: Vec<f64> = w.iter().map(|a| a * lambda * (1.0 - alpha)).collect();
        let reference = common::admm_reference(&x, &y, &ve, &we, &groups, 1.0, 1e-11, 500_000);
        let f_ref = common::sgs_objective(&x, &y, &reference, 0.0, &ve, &we, &groups);
        let f_sol = common::sgs_objective(&x, &y, &sol.beta, 0.0, &ve, &we, &groups);
        let rel = (f_sol - f_ref) / f_ref.abs();
        println!("rep {rep}: atos {f_sol:.12} ref {f_ref:.12} rel {rel:.2e} iters {} conv {}", sol.iterations, sol.converged);
        worst = worst.max(rel.abs());
    }
    assert!(worst < 1e-6, "worst relative gap {worst}");
}
