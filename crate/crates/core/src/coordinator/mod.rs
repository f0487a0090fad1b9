//! The coordinator: drives base and warm-start rounds across datasites,
//! merges their forests and scores the result at the evaluation silo.
//!
//! The coordinator only ever holds parameters, serialized forests and
//! aggregate metrics. It has no access to silo rows.

pub mod client;
pub mod plan;

use std::collections::HashMap;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{
    aggregate_detailed, concatenate, resolve_weights_with, AggregationError, AggregationStrategy,
    ClientWeights, SiloId, WeightFill,
};
use crate::forest::RandomForest;
use crate::metrics::Metrics;
use crate::rng::derive_seed;
use crate::wire::codec::{decode_forest, encode_forest};
use crate::wire::message::{ErrorCode, Message, TrainRequest, PROTOCOL_VERSION};

pub use client::{ClientError, InProcessTransport, SiloClient, TcpTransport, Transport};
pub use plan::{FederationPlan, PlanError, SiloRole, SiloSpec, WeightFillMode};

/// Path component separating the aggregation seed from per-silo seeds.
const AGGREGATION_STREAM: u64 = u64::MAX;

/// Seed a train silo receives for `round`. Silo `index` counts train silos
/// in plan order.
pub fn silo_train_seed(seed: u64, round: u64, index: u64) -> u64 {
    derive_seed(seed, &[round, index])
}

/// Seed for the tree sampling after `round`.
pub fn aggregation_seed(seed: u64, round: u64) -> u64 {
    derive_seed(seed, &[round, AGGREGATION_STREAM])
}

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("invalid plan: {0}")]
    InvalidPlan(#[from] PlanError),
    #[error("no train silo completed round {0}")]
    NoSuccessfulClients(u64),
    #[error("evaluation silo unavailable: {0}")]
    EvalSiloUnavailable(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("evaluation failed: {code}: {message}")]
    EvalFailed { code: ErrorCode, message: String },
    #[error("aggregation failed in round {round}: {source}")]
    Aggregation {
        round: u64,
        #[source]
        source: AggregationError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiloStatus {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiloRoundReport {
    pub silo: SiloId,
    pub status: SiloStatus,
    /// Trees in the forest the silo returned.
    pub trees: Option<usize>,
    pub n_samples: Option<u64>,
    /// Resolved weight; absent for failed silos.
    pub weight: Option<f64>,
    /// Trees taken from this silo into the global forest.
    pub selected: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round_index: u64,
    pub silos: Vec<SiloRoundReport>,
    pub global_trees: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub forest: RandomForest,
    pub reports: Vec<RoundReport>,
    pub metrics: Metrics,
}

/// Knobs that do not belong in a plan file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Concatenate silo forests instead of sampling (debug comparison).
    pub concat: bool,
}

struct Session {
    spec: SiloSpec,
    client: Option<Box<dyn SiloClient>>,
}

enum Outcome {
    Ok {
        forest: RandomForest,
        n_samples: u64,
    },
    Failed(SiloStatus, String),
}

impl Session {
    fn fail(&mut self, e: ClientError) -> Outcome {
        // The stream state is unknown after an error; reconnect next time.
        self.client = None;
        let status = if e.is_timeout() {
            SiloStatus::Timeout
        } else {
            SiloStatus::Failed
        };
        Outcome::Failed(status, e.to_string())
    }

    /// Connects and sends HELLO plus both parameter sets.
    fn ensure_ready(
        &mut self,
        plan: &FederationPlan,
        transport: &dyn Transport,
    ) -> Result<(), ClientError> {
        if self.client.is_some() {
            return Ok(());
        }
        let deadline = plan.timeout();
        let mut client = transport.connect(&self.spec.id, &self.spec.address, deadline)?;
        let steps = [
            Message::Hello {
                protocol_version: PROTOCOL_VERSION,
                peer: "coordinator".into(),
            },
            Message::SetDataParams(plan.data_params.clone()),
            Message::SetModelParams(plan.model_params.clone()),
        ];
        for m in &steps {
            match client.request(m, deadline)? {
                Message::Error { code, message } => {
                    return Err(ClientError::Transport(format!("{code}: {message}")))
                }
                Message::Hello { .. } | Message::DataParamsAck | Message::ModelParamsAck => {}
                other => {
                    return Err(ClientError::Transport(format!(
                        "unexpected {} during setup",
                        other.kind().name()
                    )))
                }
            }
        }
        self.client = Some(client);
        Ok(())
    }

    fn train(
        &mut self,
        plan: &FederationPlan,
        transport: &dyn Transport,
        request: TrainRequest,
        expected: usize,
    ) -> Outcome {
        if let Err(e) = self.ensure_ready(plan, transport) {
            return self.fail(e);
        }
        let round = request.round_index;
        let reply = self
            .client
            .as_mut()
            .unwrap()
            .request(&Message::TrainRequest(request), plan.timeout());
        let response = match reply {
            Ok(Message::TrainResponse(r)) => r,
            Ok(Message::Error { code, message }) => {
                return Outcome::Failed(SiloStatus::Failed, format!("{code}: {message}"))
            }
            Ok(other) => {
                self.client = None;
                return Outcome::Failed(
                    SiloStatus::Failed,
                    format!("unexpected {} reply", other.kind().name()),
                );
            }
            Err(e) => return self.fail(e),
        };
        if response.round_index != round {
            return Outcome::Failed(
                SiloStatus::Failed,
                format!("answered round {} for round {round}", response.round_index),
            );
        }
        let forest = match decode_forest(&response.forest) {
            Ok(f) => f,
            Err(e) => return Outcome::Failed(SiloStatus::Failed, format!("corrupt forest: {e}")),
        };
        if forest.len() != expected {
            return Outcome::Failed(
                SiloStatus::Failed,
                format!("returned {} trees, expected {expected}", forest.len()),
            );
        }
        if forest.label_names != plan.data_params.label_names {
            return Outcome::Failed(
                SiloStatus::Failed,
                "label table differs from the plan".into(),
            );
        }
        Outcome::Ok {
            forest,
            n_samples: response.n_samples,
        }
    }
}

/// Runs a full federation: round 0 base training, then
/// `incremental_rounds` warm-start rounds, each followed by aggregation,
/// then evaluation at the evaluation silo. `on_round` sees every report as
/// soon as its round finishes.
pub fn run_federation(
    plan: &FederationPlan,
    transport: &dyn Transport,
    options: RunOptions,
    on_round: &mut dyn FnMut(&RoundReport),
) -> Result<FederationOutcome, CoordinatorError> {
    plan.validate()?;
    let seed = plan.model_params.seed;
    let mut sessions: Vec<Session> = plan
        .train_silos()
        .map(|spec| Session {
            spec: spec.clone(),
            client: None,
        })
        .collect();
    let mut global: Option<RandomForest> = None;
    let mut reports = Vec::new();

    for round in 0..=plan.model_params.incremental_rounds as u64 {
        let start = Instant::now();
        let expected = plan.model_params.expected_trees(round as u32);
        let base_bytes = global.as_ref().map(encode_forest);

        let outcomes: Vec<Outcome> = thread::scope(|scope| {
            let handles: Vec<_> = sessions
                .iter_mut()
                .enumerate()
                .map(|(i, session)| {
                    let request = TrainRequest {
                        round_index: round,
                        model_params: plan.model_params.clone(),
                        seed: silo_train_seed(seed, round, i as u64),
                        base_forest: base_bytes.clone(),
                    };
                    scope.spawn(move || session.train(plan, transport, request, expected))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join().unwrap_or_else(|_| {
                        Outcome::Failed(SiloStatus::Failed, "worker panicked".into())
                    })
                })
                .collect()
        });

        let mut silo_reports = Vec::with_capacity(sessions.len());
        let mut forests = Vec::new();
        let mut samples = HashMap::new();
        for (session, outcome) in sessions.iter().zip(outcomes) {
            let id = session.spec.id.clone();
            match outcome {
                Outcome::Ok { forest, n_samples } => {
                    silo_reports.push(SiloRoundReport {
                        silo: id.clone(),
                        status: SiloStatus::Ok,
                        trees: Some(forest.len()),
                        n_samples: Some(n_samples),
                        weight: None,
                        selected: None,
                        error: None,
                    });
                    samples.insert(id.clone(), n_samples);
                    forests.push((id, forest));
                }
                Outcome::Failed(status, error) => silo_reports.push(SiloRoundReport {
                    silo: id,
                    status,
                    trees: None,
                    n_samples: None,
                    weight: None,
                    selected: None,
                    error: Some(error),
                }),
            }
        }
        if forests.is_empty() {
            let report = RoundReport {
                round_index: round,
                silos: silo_reports,
                global_trees: global.as_ref().map_or(0, RandomForest::len),
                wall_ms: start.elapsed().as_millis() as u64,
            };
            on_round(&report);
            return Err(CoordinatorError::NoSuccessfulClients(round));
        }

        let successful: Vec<SiloId> = forests.iter().map(|(s, _)| s.clone()).collect();
        let declared = match plan.strategy {
            AggregationStrategy::Uniform => {
                ClientWeights::absent(plan.train_silos().map(|s| s.id.clone()))
            }
            AggregationStrategy::Weighted => ClientWeights::new(
                plan.train_silos()
                    .map(|s| (s.id.clone(), s.weight))
                    .collect(),
            ),
        };
        let fill = match plan.weight_fill {
            WeightFillMode::Equal => WeightFill::Equal,
            WeightFillMode::Proportional => WeightFill::Proportional(samples),
        };
        let agg_err = |source| CoordinatorError::Aggregation { round, source };
        let weights = resolve_weights_with(&declared, &successful, &fill).map_err(agg_err)?;
        let merged = if options.concat {
            let forest = concatenate(&forests).map_err(agg_err)?;
            for r in &mut silo_reports {
                r.selected = r.trees;
            }
            forest
        } else {
            let detail = aggregate_detailed(&forests, &weights, aggregation_seed(seed, round))
                .map_err(agg_err)?;
            for sel in &detail.selections {
                if let Some(r) = silo_reports.iter_mut().find(|r| r.silo == sel.silo) {
                    r.selected = Some(sel.total());
                }
            }
            detail.forest
        };
        for r in &mut silo_reports {
            if r.status == SiloStatus::Ok {
                r.weight = Some(weights.weight(&r.silo));
            }
        }
        let report = RoundReport {
            round_index: round,
            silos: silo_reports,
            global_trees: merged.len(),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_round(&report);
        reports.push(report);
        global = Some(merged);
    }

    let forest = global.expect("at least one round ran");
    let metrics = evaluate_global(plan, transport, &forest)?;
    Ok(FederationOutcome {
        forest,
        reports,
        metrics,
    })
}

/// Asks the evaluation silo to score `forest` on its data.
pub fn evaluate_global(
    plan: &FederationPlan,
    transport: &dyn Transport,
    forest: &RandomForest,
) -> Result<Metrics, CoordinatorError> {
    let spec = plan.eval_silo()?.clone();
    let mut session = Session { spec, client: None };
    session
        .ensure_ready(plan, transport)
        .map_err(|e| CoordinatorError::EvalSiloUnavailable(e.to_string()))?;
    let reply = session
        .client
        .as_mut()
        .unwrap()
        .request(
            &Message::EvalRequest {
                forest: encode_forest(forest),
            },
            plan.timeout(),
        )
        .map_err(|e| CoordinatorError::EvalSiloUnavailable(e.to_string()))?;
    match reply {
        Message::EvalResponse(m) => Ok(m),
        Message::Error {
            code: ErrorCode::SchemaMismatch,
            message,
        } => Err(CoordinatorError::SchemaMismatch(message)),
        Message::Error { code, message } => Err(CoordinatorError::EvalFailed { code, message }),
        other => Err(CoordinatorError::EvalSiloUnavailable(format!(
            "unexpected {} reply",
            other.kind().name()
        ))),
    }
}

/// Default per-request deadline.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[cfg(test)]
mod tests;
