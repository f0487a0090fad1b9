//! Experiment harness: partitions one table into silos, runs local
//! federations and sweeps silo counts against a centralized baseline.

pub mod experiment;
pub mod local;
pub mod partition;

use thiserror::Error;

use crate::coordinator::CoordinatorError;
use crate::dataset::DatasetError;
use crate::forest::ForestError;

pub use experiment::{
    acc_dev, centralized_forest, run_centralized, run_experiment, run_federated, summarize,
    ExperimentConfig, ExperimentReport, LoadedData, ResultRow, RunRecord,
};
pub use local::{
    run_in_process, run_multi_process, spawn_datasite, train_silo_id, DatasiteProcess,
    FederationMode, FederationSetup, LocalCluster, SiloTables, EVAL_SILO,
};
pub use partition::{partition, partition_rows, Partition, PartitionError, RowSplit};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error("port unavailable: {0}")]
    PortUnavailable(String),
    #[error("ports still accepting after teardown: {0}")]
    LeakedPorts(String),
    #[error("datasite {silo} failed:\n{logs}")]
    ChildProcessFailure { silo: String, logs: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
