//! CSV ingestion of designs, responses and groupings.
//!
//! Every reader accepts an optional header row: a first row whose fields do
//! not all parse as numbers is skipped. Line numbers in errors are 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::GroupPartition;
use crate::error::{Result, SgsError};

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| SgsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Numeric rows of a CSV source, with the line each came from.
fn numeric_rows<R: Read>(source: R, name: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let parse_error = |line: usize, message: String| SgsError::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (k, record) in reader(source).records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(k + 1, |p| p.line() as usize);
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                    return Err(parse_error(line, format!("field {} is not finite", col + 1)));
                }
                rows.push((line, values));
            }
            // the first non-empty row may be a header
            Err(_) if rows.is_empty() && k == 0 => {}
            Err(_) => {
                let col = record.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0);
                return Err(parse_error(
                    line,
                    format!("field {} ({:?}) is not a number", col + 1, &record[col]),
                ));
            }
        }
    }
    Ok(rows)
}

/// Reads an `n x p` design from a numeric CSV source.
pub fn read_design_from<R: Read>(source: R, name: &str) -> Result<DMatrix<f64>> {
    let rows = numeric_rows(source, name)?;
    let Some((_, first)) = rows.first() else {
        return Err(SgsError::Parse {
            path: name.to_string(),
            line: 1,
            message: "no data rows".into(),
        });
    };
    let p = first.len();
    for (line, row) in &rows {
        if row.len() != p {
            return Err(SgsError::Parse {
                path: name.to_string(),
                line: *line,
                message: format!("expected {p} fields, found {}", row.len()),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), p, |i, j| rows[i].1[j]))
}

/// Reads a single-column response.
pub fn read_response_from<R: Read>(source: R, name: &str) -> Result<DVector<f64>> {
    let rows = numeric_rows(source, name)?;
    if rows.is_empty() {
        return Err(SgsError::Parse {
            path: name.to_string(),
            line: 1,
            message: "no data rows".into(),
        });
    }
    let mut y = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row.len() != 1 {
            return Err(SgsError::Parse {
                path: name.to_string(),
                line,
                message: format!("expected 1 field, found {}", row.len()),
            });
        }
        y.push(row[0]);
    }
    Ok(DVector::from_vec(y))
}

/// Reads `variable_index,group_id` rows (0-based variable indices).
///
/// Group ids may be any non-negative integers; they are relabelled `0..m` in
/// increasing order. Every variable in `0..p` must appear exactly once.
pub fn read_grouping_from<R: Read>(source: R, name: &str) -> Result<GroupPartition> {
    let parse_error = |line: usize, message: String| SgsError::Parse {
        path: name.to_string(),
        line,
        message,
    };
    let rows = numeric_rows(source, name)?;
    let mut assigned: BTreeMap<usize, (usize, u64)> = BTreeMap::new();
    for (line, row) in &rows {
        if row.len() != 2 {
            return Err(parse_error(*line, format!("expected 2 fields, found {}", row.len())));
        }
        let as_index = |v: f64, what: &str| {
            if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(parse_error(*line, format!("{what} must be a non-negative integer, found {v}")))
            }
        };
        let variable = as_index(row[0], "variable index")? as usize;
        let group = as_index(row[1], "group id")?;
        if let Some((first, _)) = assigned.insert(variable, (*line, group)) {
            return Err(parse_error(*line, format!("variable {variable} already assigned on line {first}")));
        }
    }
    let p = assigned.len();
    if p == 0 {
        return Err(parse_error(1, "no data rows".into()));
    }
    if let Some(missing) = (0..p).find(|i| !assigned.contains_key(i)) {
        return Err(parse_error(
            rows.last().map_or(1, |r| r.0),
            format!("variable indices must cover 0..{p}; {missing} is missing"),
        ));
    }
    let labels: BTreeSet<u64> = assigned.values().map(|&(_, g)| g).collect();
    let dense: BTreeMap<u64, usize> = labels.into_iter().enumerate().map(|(k, g)| (g, k)).collect();
    GroupPartition::from_assignments(assigned.values().map(|(_, g)| dense[g]).collect())
}

pub fn read_design(path: &Path) -> Result<DMatrix<f64>> {
    read_design_from(open(path)?, &path.display().to_string())
}

pub fn read_response(path: &Path) -> Result<DVector<f64>> {
    read_response_from(open(path)?, &path.display().to_string())
}

pub fn read_grouping(path: &Path) -> Result<GroupPartition> {
    read_grouping_from(open(path)?, &path.display().to_string())
}
