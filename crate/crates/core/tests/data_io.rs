use std::io::Write;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sgs_core::data::{split, standardize, unstandardize_coefficients, Family, GroupPartition, GroupedDataset};
use sgs_core::error::SgsError;
use sgs_core::io::{read_design, read_grouping, read_response};
use sgs_core::metrics::compute_metrics_for;

fn file(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

#[test]
fn reads_design_response_and_grouping_from_disk() {
    let x = file("x1,x2,x3\n# a comment\n1,2,3\n4,5,6\n");
    let y = file("y\n0.5\n-1.5\n");
    let g = file("variable_index,group_id\n0,10\n1,10\n2,4\n");
    let x = read_design(x.path()).unwrap();
    let y = read_response(y.path()).unwrap();
    let part = read_grouping(g.path()).unwrap();
    assert_eq!(x.shape(), (2, 3));
    assert_eq!(x[(1, 2)], 6.0);
    assert_eq!(y.as_slice(), &[0.5, -1.5]);
    assert_eq!(part.sizes(), vec![1, 2]);
    assert_eq!(part.group_of(0), 1);
    GroupedDataset::new(x, y, part, Family::Gaussian).unwrap();
}

#[test]
fn malformed_rows_report_their_line() {
    let x = file("1,2\n3,4\n5,x\n");
    match read_design(x.path()).unwrap_err() {
        SgsError::Parse { line, path, .. } => {
            assert_eq!(line, 3);
            assert!(path.ends_with(x.path().file_name().unwrap().to_str().unwrap()));
        }
        other => panic!("unexpected {other}"),
    }
    let g = file("0,0\n1,0\n1,1\n");
    assert!(matches!(read_grouping(g.path()).unwrap_err(), SgsError::Parse { line: 3, .. }));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_design(&dir.path().join("absent.csv")).unwrap_err();
    assert!(matches!(err, SgsError::Io { .. }), "{err}");
}

#[test]
fn split_is_a_disjoint_cover() {
    let x = DMatrix::from_fn(20, 2, |i, j| (i * 2 + j) as f64);
    let y = DVector::from_fn(20, |i, _| i as f64);
    let data = GroupedDataset::new(x, y, GroupPartition::singletons(2), Family::Gaussian).unwrap();
    let (train, test) = split(&data, 0.25, 3).unwrap();
    assert_eq!((train.n(), test.n()), (15, 5));
    let mut rows: Vec<f64> = train.y().iter().chain(test.y().iter()).copied().collect();
    rows.sort_by(f64::total_cmp);
    assert_eq!(rows, (0..20).map(|i| i as f64).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn standardized_coefficients_give_the_same_predictions(
        entries in prop::collection::vec(-5.0..5.0f64, 24),
        ys in prop::collection::vec(-5.0..5.0f64, 8),
        beta in prop::collection::vec(-2.0..2.0f64, 3),
        intercept in -1.0..1.0f64,
    ) {
        let x = DMatrix::from_column_slice(8, 3, &entries);
        let data = GroupedDataset::new(x.clone(), DVector::from_vec(ys), GroupPartition::singletons(3), Family::Gaussian).unwrap();
        let Ok((std_data, record)) = standardize(&data) else { return Ok(()) };
        let b = DVector::from_vec(beta);
        let (b0, c0) = unstandardize_coefficients(&b, intercept, &record).unwrap();
        let on_std = std_data.x() * &b;
        let on_orig = &x * &b0;
        for i in 0..8 {
            prop_assert!((on_std[i] + intercept + record.response_center - on_orig[i] - c0).abs() < 1e-9);
        }
    }

    #[test]
    fn confusion_counts_are_consistent(
        truth in prop::collection::vec(prop::bool::ANY, 12),
        chosen in prop::collection::vec(prop::bool::ANY, 12),
    ) {
        let partition = GroupPartition::from_sizes(&[3, 3, 2, 4]).unwrap();
        let tb: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let hb: Vec<f64> = chosen.iter().map(|&t| if t { 0.5 } else { 0.0 }).collect();
        let m = compute_metrics_for(&tb, &hb, &partition).unwrap();
        let c = m.variable.counts;
        prop_assert_eq!(c.tp + c.fp + c.tn + c.fn_, 12);
        prop_assert_eq!(c.tp + c.fp, chosen.iter().filter(|&&s| s).count());
        prop_assert_eq!(m.selected_variables, c.tp + c.fp);
        prop_assert!((m.variable.fdr - c.fp as f64 / (c.tp + c.fp).max(1) as f64).abs() < 1e-15);
        let g = m.group.counts;
        prop_assert_eq!(g.tp + g.fp + g.tn + g.fn_, 4);
        prop_assert!(m.variable.f1 >= 0.0 && m.variable.f1 <= 1.0);
        let mse: f64 = tb.iter().zip(&hb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 12.0;
        prop_assert!((m.mse - mse).abs() < 1e-12);
    }
}
