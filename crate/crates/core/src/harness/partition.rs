//! Splitting one table into a test silo and equal train silos.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::rng::StreamRng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("{rows} rows cannot fill a test set and {silos} non-empty silos")]
    TooFewRows { rows: usize, silos: usize },
    #[error("train silo {silo} holds a single class")]
    SingleClassPartition { silo: usize },
    #[error("invalid partition settings: {0}")]
    Invalid(String),
}

/// Row indices into the source table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSplit {
    pub test: Vec<usize>,
    pub parts: Vec<Vec<usize>>,
}

impl RowSplit {
    /// Train rows of all silos, in silo order.
    pub fn train_rows(&self) -> Vec<usize> {
        self.parts.concat()
    }
}

/// Test rows: `ceil(test_fraction * n)`, forgiving representation error just
/// above an integer.
pub fn test_size(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Sizes of `n_silos` contiguous parts covering `rows`; the first
/// `rows % n_silos` parts get one extra row.
pub fn part_sizes(rows: usize, n_silos: usize) -> Vec<usize> {
    (0..n_silos)
        .map(|i| rows / n_silos + usize::from(i < rows % n_silos))
        .collect()
}

/// Seeded shuffle, then the first `ceil(test_fraction * n)` rows go to the
/// test silo and the rest are cut into `n_silos` contiguous near-equal
/// parts. With `stratify`, rows are ordered so every contiguous block keeps
/// the overall class mix. When `labels` is given, every train part must
/// contain at least two classes.
pub fn partition_rows(
    n_rows: usize,
    labels: Option<&[u32]>,
    n_silos: usize,
    test_fraction: f64,
    seed: u64,
    stratify: bool,
) -> Result<RowSplit, PartitionError> {
    if n_silos == 0 {
        return Err(PartitionError::Invalid("n_silos must be at least 1".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(PartitionError::Invalid(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    if labels.is_some_and(|l| l.len() != n_rows) {
        return Err(PartitionError::Invalid("one label per row required".into()));
    }
    let n_test = test_size(n_rows, test_fraction);
    if n_test == 0 || n_rows - n_test < n_silos {
        return Err(PartitionError::TooFewRows {
            rows: n_rows,
            silos: n_silos,
        });
    }

    let mut order: Vec<usize> = (0..n_rows).collect();
    StreamRng::new(seed, 0).shuffle(&mut order);
    if stratify {
        let labels =
            labels.ok_or_else(|| PartitionError::Invalid("stratify needs labels".into()))?;
        order = stratified_order(&order, labels);
    }

    let test = order[..n_test].to_vec();
    let mut parts = Vec::with_capacity(n_silos);
    let mut at = n_test;
    for size in part_sizes(n_rows - n_test, n_silos) {
        parts.push(order[at..at + size].to_vec());
        at += size;
    }
    if let Some(labels) = labels {
        for (silo, part) in parts.iter().enumerate() {
            let first = labels[part[0]];
            if part.iter().all(|&r| labels[r] == first) {
                return Err(PartitionError::SingleClassPartition { silo });
            }
        }
    }
    Ok(RowSplit { test, parts })
}

/// Interleaves classes by fractional position: the j-th of `n_c` rows of
/// class `c` sorts at `(j + 0.5) / n_c`.
fn stratified_order(order: &[usize], labels: &[u32]) -> Vec<usize> {
    let n_classes = order
        .iter()
        .map(|&r| labels[r] as usize + 1)
        .max()
        .unwrap_or(0);
    let mut totals = vec![0usize; n_classes];
    for &r in order {
        totals[labels[r] as usize] += 1;
    }
    let mut seen = vec![0usize; n_classes];
    let mut keyed: Vec<(f64, u32, usize)> = order
        .iter()
        .map(|&r| {
            let c = labels[r] as usize;
            let key = (seen[c] as f64 + 0.5) / totals[c] as f64;
            seen[c] += 1;
            (key, c as u32, r)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, r)| r).collect()
}

/// A dataset split into the test silo and the train silos.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub rows: RowSplit,
    pub test: Dataset,
    pub train: Vec<Dataset>,
}

pub fn partition(
    data: &Dataset,
    n_silos: usize,
    test_fraction: f64,
    seed: u64,
    stratify: bool,
) -> Result<Partition, PartitionError> {
    let rows = partition_rows(
        data.n_samples(),
        Some(data.labels()),
        n_silos,
        test_fraction,
        seed,
        stratify,
    )?;
    Ok(Partition {
        test: data.select(&rows.test),
        train: rows.parts.iter().map(|p| data.select(p)).collect(),
        rows,
    })
}
