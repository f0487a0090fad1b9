//! Federation plan files.
//!
//! ```toml
//! strategy = "uniform"        # or "weighted"
//! weight_fill = "equal"       # or "proportional"
//! timeout_secs = 600
//!
//! [model_params]
//! n_base_estimators = 100
//! n_incremental_estimators = 0
//! incremental_rounds = 0
//! seed = 7
//!
//! [data_params]
//! target_column = "label"
//! ignored_columns = ["id"]
//! positive_label = "1"
//! label_names = ["0", "1"]
//!
//! [[silos]]
//! id = "hospital-a"
//! address = "127.0.0.1:7001"
//! weight = 0.5                # optional
//! role = "train"              # or "eval"
//! ```

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{AggregationStrategy, SiloId, WEIGHT_EPS};
use crate::params::{DataParams, ModelParams};

use super::DEFAULT_TIMEOUT;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("cannot read plan: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse plan: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SiloRole {
    #[default]
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightFillMode {
    #[default]
    Equal,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiloSpec {
    pub id: SiloId,
    pub address: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default)]
    pub role: SiloRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationPlan {
    pub silos: Vec<SiloSpec>,
    pub model_params: ModelParams,
    pub data_params: DataParams,
    #[serde(default)]
    pub strategy: AggregationStrategy,
    #[serde(default)]
    pub weight_fill: WeightFillMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
}

impl FederationPlan {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlanError> {
        let text = std::fs::read_to_string(path)?;
        let plan: FederationPlan = toml::from_str(&text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plans always serialize")
    }

    pub fn timeout(&self) -> Duration {
        self.timeout_secs
            .map(Duration::from_secs_f64)
            .unwrap_or(DEFAULT_TIMEOUT)
    }

    pub fn train_silos(&self) -> impl Iterator<Item = &SiloSpec> {
        self.silos.iter().filter(|s| s.role == SiloRole::Train)
    }

    pub fn eval_silo(&self) -> Result<&SiloSpec, PlanError> {
        let mut evals = self.silos.iter().filter(|s| s.role == SiloRole::Eval);
        match (evals.next(), evals.next()) {
            (Some(s), None) => Ok(s),
            (None, _) => Err(PlanError::Invalid("plan has no eval silo".into())),
            _ => Err(PlanError::Invalid(
                "plan has more than one eval silo".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let invalid = |m: String| Err(PlanError::Invalid(m));
        if self.train_silos().next().is_none() {
            return invalid("plan has no train silo".into());
        }
        self.eval_silo()?;
        let mut ids: Vec<&str> = self.silos.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return invalid(format!("silo id {:?} listed twice", w[0]));
        }
        for s in &self.silos {
            if let Some(w) = s.weight {
                if !(0.0..=1.0).contains(&w) {
                    return invalid(format!("weight {w} of silo {:?} outside [0, 1]", s.id));
                }
                if s.role == SiloRole::Eval {
                    return invalid(format!("eval silo {:?} cannot carry a weight", s.id));
                }
            }
        }
        let declared: Vec<f64> = self.train_silos().filter_map(|s| s.weight).collect();
        let sum: f64 = declared.iter().sum();
        let n_train = self.train_silos().count();
        if declared.len() == n_train && (sum - 1.0).abs() > WEIGHT_EPS {
            return invalid(format!("declared weights sum to {sum}, not 1"));
        }
        if sum > 1.0 + WEIGHT_EPS {
            return invalid(format!("declared weights sum to {sum}, more than 1"));
        }
        if let Some(t) = self.timeout_secs {
            if !(t > 0.0 && t.is_finite()) {
                return invalid(format!("timeout_secs {t} must be positive"));
            }
        }
        self.model_params.validate().map_err(PlanError::Invalid)?;
        self.data_params.validate().map_err(PlanError::Invalid)?;
        Ok(())
    }
}
