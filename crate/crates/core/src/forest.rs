//! Random forests: bagged CART trees with per-split feature subsampling.
//!
//! Tree `t` of a forest fitted with seed `s` draws all of its randomness
//! from stream `t` of [`StreamRng`] keyed by `s`. Warm-started trees continue
//! the numbering, keyed by the seed passed to [`warm_start_extend`]. Trees
//! are grown in parallel; the result does not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::rng::StreamRng;
use crate::tree::{argmax_lowest, grow, DecisionTree, GrowConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has a single class; nothing to split")]
    SingleClassDataset,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("class id {0} is outside the forest's label table")]
    UnknownLabel(u32),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("forest has no trees")]
    EmptyForest,
}

/// Number of features examined per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    #[default]
    Sqrt,
    Log2,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Fixed(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    #[serde(default)]
    pub max_features: MaxFeatures,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_samples_split")]
    pub min_samples_split: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_samples_split() -> usize {
    2
}

fn default_bootstrap() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_estimators(n_estimators: usize, seed: u64) -> Self {
        Self {
            n_estimators,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.n_estimators == 0 {
            return Err(ForestError::InvalidParams(
                "n_estimators must be >= 1".into(),
            ));
        }
        if let MaxFeatures::Fixed(k) = self.max_features {
            if k == 0 || k > n_features {
                return Err(ForestError::InvalidParams(format!(
                    "max_features {k} not in 1..={n_features}"
                )));
            }
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidParams("max_depth must be >= 1".into()));
        }
        if self.min_samples_split == 0 {
            return Err(ForestError::InvalidParams(
                "min_samples_split must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn grow_config(&self, n_features: usize) -> GrowConfig {
        GrowConfig {
            max_features: self.max_features.resolve(n_features),
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
        }
    }
}

/// An ordered collection of trees over a fixed feature and class table.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl RandomForest {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Same feature table and class table.
    pub fn same_schema(&self, other: &RandomForest) -> bool {
        self.feature_names == other.feature_names && self.label_names == other.label_names
    }

    /// Forest holding the first `k` trees.
    pub fn truncated(&self, k: usize) -> RandomForest {
        let mut out = self.clone();
        out.trees.truncate(k);
        out.params.n_estimators = out.trees.len();
        out
    }

    /// Per-class vote counts for `row`.
    pub fn votes(&self, row: &[f64]) -> Result<Vec<u32>, ForestError> {
        self.check_row(row)?;
        let mut votes = vec![0u32; self.n_classes()];
        for tree in &self.trees {
            votes[tree.predict(row) as usize] += 1;
        }
        Ok(votes)
    }

    /// Majority vote over the trees; the lowest class id wins ties.
    pub fn predict(&self, row: &[f64]) -> Result<u32, ForestError> {
        if self.trees.is_empty() {
            return Err(ForestError::EmptyForest);
        }
        self.votes(row).map(|v| argmax_lowest(&v))
    }

    /// Predictions for every row of `data`.
    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<u32>, ForestError> {
        if data.feature_names() != self.feature_names.as_slice() {
            return Err(ForestError::SchemaMismatch(
                "dataset features differ from the forest's".into(),
            ));
        }
        if self.trees.is_empty() {
            return Err(ForestError::EmptyForest);
        }
        Ok((0..data.n_samples())
            .into_par_iter()
            .map(|i| {
                let row = data.row(i);
                let mut votes = vec![0u32; self.n_classes()];
                for tree in &self.trees {
                    votes[tree.predict(row) as usize] += 1;
                }
                argmax_lowest(&votes)
            })
            .collect())
    }

    /// Checks the cross-tree invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.trees.is_empty() {
            return Err("forest has no trees".into());
        }
        for (i, t) in self.trees.iter().enumerate() {
            if t.n_features != self.n_features() || t.n_classes != self.n_classes() {
                return Err(format!("tree {i} disagrees with the forest tables"));
            }
            t.validate().map_err(|e| format!("tree {i}: {e}"))?;
        }
        Ok(())
    }

    fn check_row(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.n_features() {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Checks that `data` can be used with this forest.
    pub fn check_dataset(&self, data: &Dataset) -> Result<(), ForestError> {
        if data.feature_names() != self.feature_names.as_slice() {
            return Err(ForestError::SchemaMismatch(format!(
                "dataset has features {:?}, forest expects {:?}",
                data.feature_names(),
                self.feature_names
            )));
        }
        if let Some(&bad) = data
            .labels()
            .iter()
            .find(|&&l| l as usize >= self.n_classes())
        {
            return Err(ForestError::UnknownLabel(bad));
        }
        let shared = data.n_classes().min(self.n_classes());
        if data.label_names()[..shared] != self.label_names[..shared] {
            return Err(ForestError::SchemaMismatch(format!(
                "dataset labels {:?}, forest labels {:?}",
                data.label_names(),
                self.label_names
            )));
        }
        Ok(())
    }
}

fn grow_trees(
    data: &Dataset,
    params: &ForestParams,
    seed: u64,
    streams: std::ops::Range<u64>,
) -> Vec<DecisionTree> {
    let config = params.grow_config(data.n_features());
    let n = data.n_samples();
    streams
        .into_par_iter()
        .map(|stream| {
            let mut rng = StreamRng::new(seed, stream);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            grow(data, samples, config, &mut rng)
        })
        .collect()
}

/// Trains `params.n_estimators` trees on `data`.
pub fn fit_forest(data: &Dataset, params: &ForestParams) -> Result<RandomForest, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    if data.distinct_labels() < 2 {
        return Err(ForestError::SingleClassDataset);
    }
    params.validate(data.n_features())?;
    let trees = grow_trees(data, params, params.seed, 0..params.n_estimators as u64);
    Ok(RandomForest {
        trees,
        params: params.clone(),
        label_names: data.label_names().to_vec(),
        feature_names: data.feature_names().to_vec(),
    })
}

/// Returns a copy of `forest` with `n_additional` new trees trained on
/// `data` appended. The existing trees are untouched.
///
/// The new trees use `forest.params` for their growth limits and draw from
/// streams `forest.len()..` of `seed`. Unlike a fresh fit, a single-class
/// `data` is accepted: a silo may lack some classes of the shared table.
pub fn warm_start_extend(
    forest: &RandomForest,
    data: &Dataset,
    n_additional: usize,
    seed: u64,
) -> Result<RandomForest, ForestError> {
    if n_additional == 0 {
        return Err(ForestError::InvalidParams(
            "n_additional must be >= 1".into(),
        ));
    }
    if data.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    forest.check_dataset(data)?;
    // Grow against the forest's label table so class-count vectors line up.
    let aligned;
    let data = if data.n_classes() == forest.n_classes() {
        data
    } else {
        aligned = Dataset::new(
            data.feature_names().to_vec(),
            data.rows().flatten().copied().collect(),
            data.labels().to_vec(),
            forest.label_names.clone(),
        )
        .map_err(|e| ForestError::SchemaMismatch(e.to_string()))?;
        &aligned
    };
    let mut params = forest.params.clone();
    params.n_estimators = forest.len() + n_additional;
    params.validate(data.n_features())?;

    let start = forest.len() as u64;
    let new_trees = grow_trees(data, &params, seed, start..start + n_additional as u64);
    let mut trees = Vec::with_capacity(forest.len() + n_additional);
    trees.extend_from_slice(&forest.trees);
    trees.extend(new_trees);
    Ok(RandomForest {
        trees,
        params,
        label_names: forest.label_names.clone(),
        feature_names: forest.feature_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Dataset {
        Dataset::from_rows(
            vec!["x".into()],
            &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![0, 0, 1, 1],
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    fn noisy(n: usize, seed: u64) -> Dataset {
        let mut rng = StreamRng::new(seed, 99);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a = rng.unit();
            let b = rng.unit();
            rows.push(vec![a, b, rng.unit()]);
            labels.push(u32::from(a + 0.3 * b + 0.2 * rng.unit() > 0.75));
        }
        Dataset::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            &rows,
            labels,
            vec!["0".into(), "1".into()],
        )
        .unwrap()
    }

    #[test]
    fn single_separable_tree() {
        let params = ForestParams {
            n_estimators: 1,
            max_features: MaxFeatures::All,
            bootstrap: false,
            ..ForestParams::default()
        };
        let f = fit_forest(&separable(), &params).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.trees[0].nodes.iter().filter(|n| !n.is_leaf()).count(), 1);
        let data = separable();
        assert_eq!(f.predict_all(&data).unwrap(), data.labels());
    }

    #[test]
    fn fit_errors() {
        let empty = separable().select(&[]);
        assert_eq!(
            fit_forest(&empty, &ForestParams::default()).unwrap_err(),
            ForestError::EmptyDataset
        );
        let single = separable().select(&[0, 1]);
        assert_eq!(
            fit_forest(&single, &ForestParams::default()).unwrap_err(),
            ForestError::SingleClassDataset
        );
        let bad = ForestParams {
            max_features: MaxFeatures::Fixed(2),
            ..ForestParams::default()
        };
        assert!(matches!(
            fit_forest(&separable(), &bad),
            Err(ForestError::InvalidParams(_))
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let data = noisy(80, 1);
        let p = ForestParams::with_estimators(12, 42);
        assert_eq!(
            fit_forest(&data, &p).unwrap(),
            fit_forest(&data, &p).unwrap()
        );
        let q = ForestParams::with_estimators(12, 43);
        assert_ne!(
            fit_forest(&data, &p).unwrap(),
            fit_forest(&data, &q).unwrap()
        );
    }

    #[test]
    fn bootstrap_trees_differ() {
        let data = noisy(40, 2);
        let f = fit_forest(&data, &ForestParams::with_estimators(2, 5)).unwrap();
        assert_ne!(f.trees[0], f.trees[1]);
    }

    #[test]
    fn warm_start_appends() {
        let data = noisy(60, 3);
        let mut f = fit_forest(&data, &ForestParams::with_estimators(50, 1)).unwrap();
        for round in 0..5 {
            let g = warm_start_extend(&f, &data, 10, 100 + round).unwrap();
            assert_eq!(&g.trees[..f.len()], &f.trees[..]);
            f = g;
        }
        assert_eq!(f.len(), 100);
        assert_eq!(f.params.n_estimators, 100);
    }

    #[test]
    fn warm_start_checks_schema() {
        let data = noisy(30, 4);
        let f = fit_forest(&data, &ForestParams::with_estimators(3, 1)).unwrap();
        let other = separable();
        assert!(matches!(
            warm_start_extend(&f, &other, 1, 0),
            Err(ForestError::SchemaMismatch(_))
        ));
        let three = Dataset::new(
            data.feature_names().to_vec(),
            data.rows().flatten().copied().collect(),
            data.labels().iter().map(|&l| l * 2).collect(),
            vec!["0".into(), "1".into(), "2".into()],
        )
        .unwrap();
        assert!(matches!(
            warm_start_extend(&f, &three, 1, 0),
            Err(ForestError::UnknownLabel(2))
        ));
        assert!(warm_start_extend(&f, &data, 0, 0).is_err());
    }

    #[test]
    fn warm_start_accepts_single_class_silo() {
        let data = noisy(30, 5);
        let f = fit_forest(&data, &ForestParams::with_estimators(3, 1)).unwrap();
        let ones: Vec<usize> = (0..30).filter(|&i| data.labels()[i] == 1).collect();
        let g = warm_start_extend(&f, &data.select(&ones), 2, 9).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.trees[4].nodes.len(), 1);
    }

    #[test]
    fn predict_checks_dimension() {
        let f = fit_forest(&separable(), &ForestParams::with_estimators(3, 0)).unwrap();
        assert_eq!(
            f.predict(&[1.0, 2.0]).unwrap_err(),
            ForestError::DimensionMismatch {
                expected: 1,
                got: 2
            }
        );
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(23), 4);
        assert_eq!(MaxFeatures::Log2.resolve(19), 4);
        assert_eq!(MaxFeatures::All.resolve(7), 7);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::Log2.resolve(1), 1);
    }
}
