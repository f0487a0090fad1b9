//! Silo-count sweeps against a centralized baseline.
//!
//! ```toml
//! name = "aids"
//! data = "AIDS_Classification.csv"   # relative to the config file
//! out_dir = "results/aids"
//! silo_counts = [1, 3, 5, 10]
//! test_fraction = 0.2
//! seeds = [0, 1, 2, 3, 4]
//! strategy = "uniform"
//! mode = "in_process"                # or "multi_process"
//! stratify = false
//!
//! [model_params]
//! n_base_estimators = 4100
//!
//! [data_params]
//! target_column = "infected"
//! positive_label = "1"
//! label_names = ["0", "1"]
//! ```

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::local::{
    run_in_process, run_multi_process, FederationMode, FederationSetup, SiloTables,
};
use super::partition::{partition_rows, RowSplit};
use super::HarnessError;
use crate::aggregation::AggregationStrategy;
use crate::coordinator::silo_train_seed;
use crate::dataset::{CsvTable, Dataset};
use crate::datasite::subsample;
use crate::forest::{fit_forest, warm_start_extend, ForestParams, RandomForest};
use crate::metrics::{evaluate, Metrics};
use crate::params::{DataParams, ModelParams};

fn default_test_fraction() -> f64 {
    0.2
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub data: PathBuf,
    pub out_dir: PathBuf,
    pub silo_counts: Vec<usize>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub strategy: AggregationStrategy,
    #[serde(default)]
    pub mode: FederationMode,
    #[serde(default)]
    pub stratify: bool,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
    /// `seed` is replaced by each entry of `seeds`.
    pub model_params: ModelParams,
    pub data_params: DataParams,
}

impl ExperimentConfig {
    /// Reads a config; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut c: ExperimentConfig =
            toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if c.data.is_relative() {
            c.data = base.join(&c.data);
        }
        if c.out_dir.is_relative() {
            c.out_dir = base.join(&c.out_dir);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!(
                "test_fraction {} outside (0, 1)",
                self.test_fraction
            ));
        }
        if self.silo_counts.is_empty() || self.silo_counts.contains(&0) {
            return bad("silo_counts must be non-empty and at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty".into());
        }
        self.model_params.validate().map_err(HarnessError::Config)?;
        self.data_params.validate().map_err(HarnessError::Config)?;
        Ok(())
    }

    fn setup(&self, seed: u64) -> FederationSetup {
        FederationSetup {
            model_params: ModelParams {
                seed,
                ..self.model_params.clone()
            },
            data_params: self.data_params.clone(),
            strategy: self.strategy,
            timeout_secs: self.timeout_secs,
        }
    }
}

/// One centralized or federated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// `None` for the centralized baseline.
    pub n_silos: Option<usize>,
    pub trees: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub test_rows: u64,
    pub wall_ms: u64,
}

impl RunRecord {
    fn new(seed: u64, n_silos: Option<usize>, trees: usize, m: &Metrics, wall_ms: u64) -> Self {
        Self {
            seed,
            n_silos,
            trees,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            test_rows: m.n_samples,
            wall_ms,
        }
    }
}

/// Seed-averaged metrics of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    pub n_silos: Option<usize>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `100 * (centralized - accuracy) / centralized`.
    pub acc_dev: f64,
    pub accuracy_std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<ResultRow>,
}

impl ExperimentReport {
    pub fn row(&self, n_silos: Option<usize>) -> Option<&ResultRow> {
        self.summary.iter().find(|r| r.n_silos == n_silos)
    }
}

pub fn acc_dev(centralized: f64, accuracy: f64) -> f64 {
    100.0 * (centralized - accuracy) / centralized
}

/// The baseline: the federation's schedule run on one table, with the seeds
/// a lone train silo would receive.
pub fn centralized_forest(
    train: &Dataset,
    model: &ModelParams,
) -> Result<RandomForest, HarnessError> {
    let seed_for = |round: u64| silo_train_seed(model.seed, round, 0);
    let data_for = |round: u64| subsample(train, model.sample_fraction, seed_for(round));
    let d0 = data_for(0);
    let mut forest = fit_forest(
        d0.as_deref().unwrap_or(train),
        &ForestParams::with_estimators(model.n_base_estimators as usize, seed_for(0)),
    )?;
    for round in 1..=model.incremental_rounds as u64 {
        let d = data_for(round);
        forest.params = ForestParams::with_estimators(forest.len(), seed_for(round));
        forest = warm_start_extend(
            &forest,
            d.as_deref().unwrap_or(train),
            model.n_incremental_estimators as usize,
            seed_for(round),
        )?;
    }
    Ok(forest)
}

/// The input table plus its parsed dataset.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub table: CsvTable,
    pub dataset: Dataset,
}

impl LoadedData {
    pub fn load(path: &Path, params: &DataParams) -> Result<Self, HarnessError> {
        let table = CsvTable::read(path)?;
        let dataset = Dataset::from_table(&table, params)?;
        Ok(Self { table, dataset })
    }

    pub fn split(
        &self,
        n_silos: usize,
        test_fraction: f64,
        seed: u64,
        stratify: bool,
    ) -> Result<RowSplit, HarnessError> {
        Ok(partition_rows(
            self.dataset.n_samples(),
            Some(self.dataset.labels()),
            n_silos,
            test_fraction,
            seed,
            stratify,
        )?)
    }

    pub fn tables(&self, split: &RowSplit) -> SiloTables {
        SiloTables {
            test: self.table.select(&split.test),
            train: split.parts.iter().map(|p| self.table.select(p)).collect(),
        }
    }
}

/// Centralized metrics for `seed`.
pub fn run_centralized(
    data: &LoadedData,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(RandomForest, Metrics), HarnessError> {
    // The train rows as a set do not depend on the silo count.
    let split = data.split(1, config.test_fraction, seed, config.stratify)?;
    let train = data.dataset.select(&split.train_rows());
    let test = data.dataset.select(&split.test);
    let setup = config.setup(seed);
    let forest = centralized_forest(&train, &setup.model_params)?;
    let positive = config
        .data_params
        .positive_class()
        .ok_or_else(|| HarnessError::Config("positive label not in label_names".into()))?;
    let metrics = evaluate(&forest, &test, positive)?;
    Ok((forest, metrics))
}

/// Federated metrics for `seed` and `n_silos`.
pub fn run_federated(
    data: &LoadedData,
    config: &ExperimentConfig,
    seed: u64,
    n_silos: usize,
    datasite_bin: Option<&Path>,
) -> Result<(RandomForest, Metrics), HarnessError> {
    let split = data.split(n_silos, config.test_fraction, seed, config.stratify)?;
    let tables = data.tables(&split);
    let setup = config.setup(seed);
    let outcome = match config.mode {
        FederationMode::InProcess => run_in_process(&tables, &setup)?,
        FederationMode::MultiProcess => {
            let bin = datasite_bin.ok_or_else(|| {
                HarnessError::Config("multi_process mode needs the datasite binary".into())
            })?;
            let dir = config
                .out_dir
                .join("silos")
                .join(format!("seed{seed}_n{n_silos}"));
            run_multi_process(bin, &dir, &tables, &setup)?
        }
    };
    Ok((outcome.forest, outcome.metrics))
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = xs.collect();
    let n = v.len();
    let m = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    (m, var.sqrt(), n)
}

/// Seed-averaged rows: the baseline first, then each silo count.
pub fn summarize(runs: &[RunRecord], silo_counts: &[usize]) -> Vec<ResultRow> {
    let row = |mode: String, n_silos: Option<usize>, central: Option<f64>| {
        let sel: Vec<&RunRecord> = runs.iter().filter(|r| r.n_silos == n_silos).collect();
        if sel.is_empty() {
            return None;
        }
        let (accuracy, accuracy_std, n) = mean(sel.iter().map(|r| r.accuracy));
        Some(ResultRow {
            mode,
            n_silos,
            accuracy,
            precision: mean(sel.iter().map(|r| r.precision)).0,
            recall: mean(sel.iter().map(|r| r.recall)).0,
            f1: mean(sel.iter().map(|r| r.f1)).0,
            acc_dev: acc_dev(central.unwrap_or(accuracy), accuracy),
            accuracy_std,
            runs: n,
        })
    };
    let mut out = Vec::new();
    let Some(c) = row("Centralized".into(), None, None) else {
        return out;
    };
    let central = c.accuracy;
    out.push(c);
    for &n in silo_counts {
        let label = if n == 1 {
            "1 Silo".into()
        } else {
            format!("{n} Silos")
        };
        out.extend(row(label, Some(n), Some(central)));
    }
    out
}

pub fn summary_csv(rows: &[ResultRow]) -> String {
    let mut s =
        String::from("mode,n_silos,accuracy,precision,recall,f1,acc_dev,accuracy_std,runs\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{:.6},{}\n",
            r.mode,
            r.n_silos.map(|n| n.to_string()).unwrap_or_default(),
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.acc_dev,
            r.accuracy_std,
            r.runs
        ));
    }
    s
}

pub fn summary_text(rows: &[ResultRow]) -> String {
    let mut s = format!(
        "{:<12} {:>9} {:>9} {:>9} {:>9} {:>8}\n",
        "Mode", "Accuracy", "Precision", "Recall", "F1 Score", "Acc Dev"
    );
    for r in rows {
        let dev = if r.n_silos.is_none() {
            "-".to_string()
        } else {
            format!("{:.2}%", r.acc_dev)
        };
        s.push_str(&format!(
            "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8}\n",
            r.mode, r.accuracy, r.precision, r.recall, r.f1, dev
        ));
    }
    s
}

pub fn accuracy_vs_silos_csv(rows: &[ResultRow]) -> String {
    let central = rows
        .iter()
        .find(|r| r.n_silos.is_none())
        .map(|r| r.accuracy);
    let mut s = String::from("n_silos,accuracy,accuracy_std,centralized_accuracy\n");
    for r in rows.iter().filter(|r| r.n_silos.is_some()) {
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.n_silos.unwrap(),
            r.accuracy,
            r.accuracy_std,
            central.unwrap_or(f64::NAN)
        ));
    }
    s
}

/// Runs every seed and silo count in sequence. Each finished run is
/// appended to `runs.jsonl` immediately, so a failure keeps earlier runs.
pub fn run_experiment(
    config: &ExperimentConfig,
    datasite_bin: Option<&Path>,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let data = LoadedData::load(&config.data, &config.data_params)?;
    let mut log = File::create(config.out_dir.join("runs.jsonl"))?;
    let mut runs = Vec::new();
    let mut record = |r: RunRecord, runs: &mut Vec<RunRecord>| -> Result<(), HarnessError> {
        writeln!(
            log,
            "{}",
            serde_json::to_string(&r).expect("records serialize")
        )?;
        log.flush()?;
        log::info!(
            "seed {} {}: accuracy {:.4}",
            r.seed,
            r.n_silos
                .map_or("centralized".into(), |n| format!("{n} silos")),
            r.accuracy
        );
        runs.push(r);
        Ok(())
    };

    for &seed in &config.seeds {
        let start = Instant::now();
        let (forest, m) = run_centralized(&data, config, seed)?;
        record(
            RunRecord::new(
                seed,
                None,
                forest.len(),
                &m,
                start.elapsed().as_millis() as u64,
            ),
            &mut runs,
        )?;
        for &n in &config.silo_counts {
            let start = Instant::now();
            let (forest, m) = run_federated(&data, config, seed, n, datasite_bin)?;
            record(
                RunRecord::new(
                    seed,
                    Some(n),
                    forest.len(),
                    &m,
                    start.elapsed().as_millis() as u64,
                ),
                &mut runs,
            )?;
        }
    }

    let summary = summarize(&runs, &config.silo_counts);
    fs::write(config.out_dir.join("summary.csv"), summary_csv(&summary))?;
    fs::write(config.out_dir.join("summary.txt"), summary_text(&summary))?;
    fs::write(
        config.out_dir.join("accuracy_vs_silos.csv"),
        accuracy_vs_silos_csv(&summary),
    )?;
    Ok(ExperimentReport { runs, summary })
}
