//! Federated random forests.
//!
//! Datasites train random forests on private CSV data and ship only
//! serialized models; a coordinator merges them by weighted tree sampling
//! over one base round and any number of warm-start rounds.
//!
//! * [`forest`], [`tree`], [`metrics`]: CART training, prediction, scoring.
//! * [`aggregation`]: weight resolution and tree sampling.
//! * [`wire`]: forest codec, envelope framing, protocol messages.
//! * [`datasite`]: the silo service and its approval queue.
//! * [`coordinator`]: federation plans and the round loop.
//! * [`harness`]: data partitioning and experiment sweeps.

pub mod aggregation;
pub mod coordinator;
pub mod dataset;
pub mod datasite;
pub mod events;
pub mod forest;
pub mod harness;
pub mod metrics;
pub mod params;
pub mod rng;
pub mod tree;
pub mod wire;

pub use aggregation::{
    aggregate, resolve_weights, uniform_aggregate, AggregationError, AggregationStrategy,
    ClientWeights, SiloId,
};
pub use dataset::{load_dataset, CsvTable, Dataset, DatasetError};
pub use forest::{
    fit_forest, warm_start_extend, ForestError, ForestParams, MaxFeatures, RandomForest,
};
pub use metrics::{evaluate, Confusion, Metrics};
pub use params::{DataParams, ModelParams};
pub use tree::{DecisionTree, TreeNode};
