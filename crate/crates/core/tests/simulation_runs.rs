use sgs_core::penalty::{GroupSequence, VariableSequence};
use sgs_core::simulation::{generate_orthogonal, run_fdr_experiment, true_counts, Grouping, OrthogonalScenario};

fn scenario(p: usize) -> OrthogonalScenario {
    OrthogonalScenario {
        p,
        grouping: Grouping::Even { group_count: p / 5, size: 5 },
        group_sparsity: 0.9,
        within_active_fraction: 0.6,
        seed: 0,
    }
}

#[test]
fn orthogonal_truth_has_the_requested_counts() {
    let s = scenario(1000);
    let partition = s.validate().unwrap();
    assert_eq!(true_counts(&partition, 0.9, 0.6), (60, 20));
    let (data, beta) = generate_orthogonal(&s).unwrap();
    assert_eq!(data.n(), 1000);
    assert_eq!(beta.iter().filter(|b| **b != 0.0).count(), 60);
    let active_groups = partition.groups().filter(|g| g.iter().any(|&i| beta[i] != 0.0)).count();
    assert_eq!(active_groups, 20);
    assert!((s.variable_sparsity().unwrap() - 0.94).abs() < 1e-12);
}

#[test]
fn experiments_repeat_exactly_across_thread_counts() {
    let s = scenario(100);
    let run = || {
        run_fdr_experiment(&s, &[0.9, 0.6], &[0.1], VariableSequence::VMax, GroupSequence::GMax, 4, 7).unwrap()
    };
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let parallel = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
    assert_eq!(serial, parallel);
    assert_eq!(serial.cells.len(), 2);
    assert_eq!(serial.records.len(), 8);
    let other = run_fdr_experiment(&s, &[0.9, 0.6], &[0.1], VariableSequence::VMax, GroupSequence::GMax, 4, 8).unwrap();
    assert_ne!(serial.replicate_seeds, other.replicate_seeds);
}
