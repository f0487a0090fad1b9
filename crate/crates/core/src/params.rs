//! Parameters the coordinator hands to every datasite.

use serde::{Deserialize, Serialize};

/// How a datasite turns its CSV into a labelled dataset.
///
/// `label_names` is the federation-wide class table: class id `i` is
/// `label_names[i]` at every silo, including silos that never observe
/// some of the classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataParams {
    pub target_column: String,
    #[serde(default)]
    pub ignored_columns: Vec<String>,
    pub positive_label: String,
    pub label_names: Vec<String>,
}

impl DataParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.target_column.is_empty() {
            return Err("target_column is empty".into());
        }
        if self.ignored_columns.contains(&self.target_column) {
            return Err(format!(
                "target column {:?} is also listed as ignored",
                self.target_column
            ));
        }
        if self.label_names.len() < 2 {
            return Err("label_names needs at least two classes".into());
        }
        for (i, name) in self.label_names.iter().enumerate() {
            if self.label_names[..i].contains(name) {
                return Err(format!("duplicate label {name:?}"));
            }
        }
        if self.positive_class().is_none() {
            return Err(format!(
                "positive label {:?} is not in label_names",
                self.positive_label
            ));
        }
        Ok(())
    }

    /// Class id of `positive_label`.
    pub fn positive_class(&self) -> Option<u32> {
        self.label_names
            .iter()
            .position(|l| *l == self.positive_label)
            .map(|p| p as u32)
    }
}

/// Training schedule for one federation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_base_estimators: u32,
    #[serde(default)]
    pub n_incremental_estimators: u32,
    #[serde(default)]
    pub incremental_rounds: u32,
    #[serde(default = "default_sample_fraction")]
    pub sample_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sample_fraction() -> f64 {
    1.0
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_base_estimators == 0 {
            return Err("n_base_estimators must be positive".into());
        }
        if self.incremental_rounds > 0 && self.n_incremental_estimators == 0 {
            return Err("incremental rounds need n_incremental_estimators > 0".into());
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(format!(
                "sample_fraction {} outside (0, 1]",
                self.sample_fraction
            ));
        }
        Ok(())
    }

    /// Forest size after `round` completed rounds (round 0 is the base fit).
    pub fn expected_trees(&self, round: u32) -> usize {
        self.n_base_estimators as usize + round as usize * self.n_incremental_estimators as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> DataParams {
        DataParams {
            target_column: "y".into(),
            ignored_columns: vec!["id".into()],
            positive_label: "1".into(),
            label_names: vec!["0".into(), "1".into()],
        }
    }

    #[test]
    fn target_cannot_be_ignored() {
        let mut p = data();
        assert!(p.validate().is_ok());
        p.ignored_columns.push("y".into());
        assert!(p.validate().is_err());
    }

    #[test]
    fn positive_label_must_be_known() {
        let mut p = data();
        p.positive_label = "2".into();
        assert!(p.validate().is_err());
        assert_eq!(data().positive_class(), Some(1));
    }

    #[test]
    fn schedule_sizes() {
        let m = ModelParams {
            n_base_estimators: 2050,
            n_incremental_estimators: 410,
            incremental_rounds: 5,
            sample_fraction: 1.0,
            seed: 0,
        };
        assert!(m.validate().is_ok());
        assert_eq!(m.expected_trees(5), 4100);
    }
}
