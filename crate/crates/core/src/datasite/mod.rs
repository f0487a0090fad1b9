//! The datasite: one silo's private table behind an approval gate.
//!
//! A datasite answers protocol [`Message`]s. Control messages (HELLO and
//! the parameter messages) are answered directly. Training and evaluation
//! requests pass through the [`ApprovalQueue`] first and only ever return
//! serialized forests or aggregate metrics.

pub mod queue;
pub mod server;

use std::sync::mpsc::Receiver;
use std::sync::{Arc, Mutex};

use serde_json::json;
use thiserror::Error;

use crate::dataset::{CsvTable, Dataset, DatasetError};
use crate::events::EventLog;
use crate::forest::{fit_forest, warm_start_extend, ForestError, ForestParams, RandomForest};
use crate::metrics::{evaluate, Metrics};
use crate::params::{DataParams, ModelParams};
use crate::rng::StreamRng;
use crate::wire::codec::{decode_forest, encode_forest, CodecError};
use crate::wire::message::{ErrorCode, Message, TrainRequest, TrainResponse, PROTOCOL_VERSION};

pub use queue::{ApprovalPolicy, ApprovalQueue, Decision, PendingRequest, QueueError, Ticket};

#[derive(Debug, Error)]
pub enum DatasiteError {
    #[error("request {0} is not approved")]
    NotApproved(u64),
    #[error("request rejected by the data owner")]
    Rejected,
    #[error("unknown request id {0}")]
    UnknownRequestId(u64),
    #[error("data parameters have not been set")]
    DataParamsNotSet,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("round {got} is stale; this silo is at round {current}")]
    StaleRound { got: u64, current: u64 },
    #[error("training failed: {0}")]
    TrainingFailed(#[from] ForestError),
    #[error("corrupt model: {0}")]
    CorruptModel(#[from] CodecError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl DatasiteError {
    pub fn code(&self) -> ErrorCode {
        match self {
            DatasiteError::NotApproved(_) => ErrorCode::NotApproved,
            DatasiteError::Rejected => ErrorCode::Rejected,
            DatasiteError::UnknownRequestId(_) => ErrorCode::UnknownRequestId,
            DatasiteError::DataParamsNotSet => ErrorCode::DataParamsNotSet,
            DatasiteError::SchemaMismatch(_) | DatasiteError::Dataset(_) => {
                ErrorCode::SchemaMismatch
            }
            DatasiteError::StaleRound { .. } => ErrorCode::StaleRound,
            DatasiteError::TrainingFailed(ForestError::SchemaMismatch(_)) => {
                ErrorCode::SchemaMismatch
            }
            DatasiteError::TrainingFailed(_) => ErrorCode::TrainingFailed,
            DatasiteError::CorruptModel(_) => ErrorCode::CorruptModel,
            DatasiteError::BadRequest(_) => ErrorCode::BadRequest,
        }
    }

    pub fn to_message(&self) -> Message {
        Message::error(self.code(), self.to_string())
    }
}

/// Column settings fixed by the data owner at startup. When present they
/// must agree with what the coordinator sends.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OwnerSettings {
    pub target_column: Option<String>,
    pub ignored_columns: Option<Vec<String>>,
    pub positive_label: Option<String>,
}

impl OwnerSettings {
    fn check(&self, p: &DataParams) -> Result<(), DatasiteError> {
        let mismatch = |what: &str| {
            Err(DatasiteError::SchemaMismatch(format!(
                "{what} differs from the data owner's setting"
            )))
        };
        if self
            .target_column
            .as_ref()
            .is_some_and(|t| *t != p.target_column)
        {
            return mismatch("target column");
        }
        if let Some(ignored) = &self.ignored_columns {
            let mut a = ignored.clone();
            let mut b = p.ignored_columns.clone();
            a.sort();
            b.sort();
            if a != b {
                return mismatch("ignored columns");
            }
        }
        if self
            .positive_label
            .as_ref()
            .is_some_and(|l| *l != p.positive_label)
        {
            return mismatch("positive label");
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct SiloState {
    dataset: Option<Arc<Dataset>>,
    data_params: Option<DataParams>,
    model_params: Option<ModelParams>,
    current_model: Option<RandomForest>,
    round_index: u64,
}

/// What the caller should do with a request.
#[derive(Debug)]
pub enum Reply {
    Now(Message),
    /// Parked in manual mode. Send [`Message::ApprovalPending`], wait on
    /// `decision`, then call [`Datasite::execute`] or answer `Rejected`.
    Parked {
        request_id: u64,
        summary: String,
        decision: Receiver<Decision>,
        request: Message,
    },
}

pub struct Datasite {
    name: String,
    table: CsvTable,
    owner: OwnerSettings,
    queue: ApprovalQueue,
    state: Mutex<SiloState>,
    log: EventLog,
}

impl std::fmt::Debug for Datasite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Datasite")
            .field("name", &self.name)
            .field("rows", &self.table.rows.len())
            .field("policy", &self.queue.policy())
            .finish()
    }
}

impl Datasite {
    pub fn new(name: impl Into<String>, table: CsvTable, policy: ApprovalPolicy) -> Self {
        Self {
            name: name.into(),
            table,
            owner: OwnerSettings::default(),
            queue: ApprovalQueue::new(policy),
            state: Mutex::new(SiloState::default()),
            log: EventLog::disabled(),
        }
    }

    pub fn with_owner_settings(mut self, owner: OwnerSettings) -> Self {
        self.owner = owner;
        self
    }

    pub fn with_log(mut self, log: EventLog) -> Self {
        self.log = log;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn queue(&self) -> &ApprovalQueue {
        &self.queue
    }

    pub fn round_index(&self) -> u64 {
        self.state.lock().unwrap().round_index
    }

    pub fn current_model(&self) -> Option<RandomForest> {
        self.state.lock().unwrap().current_model.clone()
    }

    /// Entry point for every incoming message.
    pub fn handle(&self, msg: Message) -> Reply {
        self.log
            .emit("request", json!({ "kind": msg.kind().name() }));
        let reply = match msg {
            Message::Hello {
                protocol_version, ..
            } => Reply::Now(if protocol_version == PROTOCOL_VERSION {
                Message::Hello {
                    protocol_version: PROTOCOL_VERSION,
                    peer: self.name.clone(),
                }
            } else {
                Message::error(
                    ErrorCode::UnsupportedVersion,
                    format!("speaks protocol {PROTOCOL_VERSION}, got {protocol_version}"),
                )
            }),
            Message::SetDataParams(p) => Reply::Now(match self.set_data_params(p) {
                Ok(()) => Message::DataParamsAck,
                Err(e) => e.to_message(),
            }),
            Message::SetModelParams(m) => Reply::Now(match m.validate() {
                Ok(()) => {
                    self.state.lock().unwrap().model_params = Some(m);
                    Message::ModelParamsAck
                }
                Err(e) => DatasiteError::BadRequest(e).to_message(),
            }),
            request @ (Message::TrainRequest(_) | Message::EvalRequest { .. }) => {
                let summary = summarize(&request);
                match self.queue.submit(summary.clone()) {
                    Ticket::Approved(id) => Reply::Now(self.execute(id, request)),
                    Ticket::Parked(request_id, decision) => {
                        self.log.emit(
                            "approval_pending",
                            json!({ "request_id": request_id, "summary": summary }),
                        );
                        Reply::Parked {
                            request_id,
                            summary,
                            decision,
                            request,
                        }
                    }
                }
            }
            other => Reply::Now(Message::error(
                ErrorCode::BadRequest,
                format!("{} is not a request", other.kind().name()),
            )),
        };
        if let Reply::Now(m) = &reply {
            self.log_response(m);
        }
        reply
    }

    fn log_response(&self, m: &Message) {
        match m {
            Message::Error { code, message } => self.log.emit(
                "response",
                json!({ "kind": "ERROR", "code": code.as_str(), "message": message }),
            ),
            _ => self
                .log
                .emit("response", json!({ "kind": m.kind().name() })),
        }
    }

    /// Runs an approved TRAIN or EVAL request. Each request id runs at most
    /// once.
    pub fn execute(&self, request_id: u64, request: Message) -> Message {
        if let Err(QueueError::NotApproved(id)) = self.queue.begin(request_id) {
            return DatasiteError::NotApproved(id).to_message();
        }
        let reply = match request {
            Message::TrainRequest(req) => self.handle_train(&req).map(Message::TrainResponse),
            Message::EvalRequest { forest } => self.handle_eval(&forest).map(Message::EvalResponse),
            other => Err(DatasiteError::BadRequest(format!(
                "{} cannot be executed",
                other.kind().name()
            ))),
        };
        reply.unwrap_or_else(|e| e.to_message())
    }

    /// Answer for a parked request once its decision arrives.
    pub fn resolve_parked(&self, request_id: u64, decision: Decision, request: Message) -> Message {
        let m = match decision {
            Decision::Approved => self.execute(request_id, request),
            Decision::Rejected => DatasiteError::Rejected.to_message(),
        };
        self.log_response(&m);
        m
    }

    pub fn approve(&self, request_id: u64) -> Result<(), DatasiteError> {
        self.queue
            .approve(request_id)
            .map_err(|_| DatasiteError::UnknownRequestId(request_id))?;
        self.log
            .emit("approved", json!({ "request_id": request_id }));
        Ok(())
    }

    pub fn reject(&self, request_id: u64) -> Result<(), DatasiteError> {
        self.queue
            .reject(request_id)
            .map_err(|_| DatasiteError::UnknownRequestId(request_id))?;
        self.log
            .emit("rejected", json!({ "request_id": request_id }));
        Ok(())
    }

    pub fn set_data_params(&self, params: DataParams) -> Result<(), DatasiteError> {
        params.validate().map_err(DatasiteError::BadRequest)?;
        self.owner.check(&params)?;
        let mut st = self.state.lock().unwrap();
        if let Some(existing) = &st.data_params {
            if *existing == params {
                return Ok(());
            }
            return Err(DatasiteError::SchemaMismatch(
                "data parameters are already set to different values".into(),
            ));
        }
        let dataset = Dataset::from_table(&self.table, &params)?;
        st.dataset = Some(Arc::new(dataset));
        st.data_params = Some(params);
        Ok(())
    }

    /// Fits a fresh forest (no base forest) or warm-starts the given one.
    pub fn handle_train(&self, req: &TrainRequest) -> Result<TrainResponse, DatasiteError> {
        // Holding the state lock for the whole fit keeps training serial.
        let mut st = self.state.lock().unwrap();
        let data = st.dataset.clone().ok_or(DatasiteError::DataParamsNotSet)?;
        let mp = &req.model_params;
        mp.validate().map_err(DatasiteError::BadRequest)?;
        if req.round_index < st.round_index {
            return Err(DatasiteError::StaleRound {
                got: req.round_index,
                current: st.round_index,
            });
        }
        let local = subsample(&data, mp.sample_fraction, req.seed);
        let data = local.as_ref().unwrap_or(&data);

        let forest = match &req.base_forest {
            None => fit_forest(
                data,
                &ForestParams::with_estimators(mp.n_base_estimators as usize, req.seed),
            )?,
            Some(bytes) => {
                if mp.n_incremental_estimators == 0 {
                    return Err(DatasiteError::BadRequest(
                        "warm start needs n_incremental_estimators > 0".into(),
                    ));
                }
                let mut base = decode_forest(bytes)?;
                if base.feature_names != data.feature_names()
                    || base.label_names != data.label_names()
                {
                    return Err(DatasiteError::SchemaMismatch(
                        "base forest does not match the local table".into(),
                    ));
                }
                base.params = ForestParams::with_estimators(base.len(), req.seed);
                warm_start_extend(&base, data, mp.n_incremental_estimators as usize, req.seed)?
            }
        };
        let response = TrainResponse {
            round_index: req.round_index,
            n_samples: data.n_samples() as u64,
            forest: encode_forest(&forest),
        };
        self.log.emit(
            "trained",
            json!({
                "round": req.round_index,
                "trees": forest.len(),
                "warm_start": req.base_forest.is_some(),
            }),
        );
        st.current_model = Some(forest);
        st.round_index = req.round_index + 1;
        Ok(response)
    }

    /// Scores a forest on the whole local table.
    pub fn handle_eval(&self, forest_bytes: &[u8]) -> Result<Metrics, DatasiteError> {
        let (data, positive) = {
            let st = self.state.lock().unwrap();
            let data = st.dataset.clone().ok_or(DatasiteError::DataParamsNotSet)?;
            let positive = st
                .data_params
                .as_ref()
                .and_then(DataParams::positive_class)
                .ok_or(DatasiteError::DataParamsNotSet)?;
            (data, positive)
        };
        let forest = decode_forest(forest_bytes)?;
        if forest.feature_names != data.feature_names() || forest.label_names != data.label_names()
        {
            return Err(DatasiteError::SchemaMismatch(format!(
                "forest has {} features / {} classes, local table has {} / {}",
                forest.n_features(),
                forest.n_classes(),
                data.n_features(),
                data.n_classes()
            )));
        }
        Ok(evaluate(&forest, &data, positive)?)
    }
}

fn summarize(m: &Message) -> String {
    match m {
        Message::TrainRequest(t) => format!(
            "train round {} ({})",
            t.round_index,
            if t.base_forest.is_some() {
                format!("warm start +{}", t.model_params.n_incremental_estimators)
            } else {
                format!("{} base trees", t.model_params.n_base_estimators)
            }
        ),
        Message::EvalRequest { forest } => format!("evaluate a {} byte forest", forest.len()),
        other => other.kind().name().to_owned(),
    }
}

/// Deterministic row subsample for `fraction < 1`, original order kept.
pub(crate) fn subsample(data: &Dataset, fraction: f64, seed: u64) -> Option<Arc<Dataset>> {
    if fraction >= 1.0 {
        return None;
    }
    let n = data.n_samples();
    let k = ((fraction * n as f64).floor() as usize).clamp(1, n);
    let mut rows: Vec<usize> = (0..n).collect();
    StreamRng::new(seed, u64::MAX).partial_shuffle(&mut rows, k);
    rows.truncate(k);
    rows.sort_unstable();
    Some(Arc::new(data.select(&rows)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> CsvTable {
        let mut text = String::from("id,a,b,y\n");
        for i in 0..40 {
            let a = (i * 37 % 40) as f64 / 4.0;
            let b = (i % 7) as f64;
            let y = u8::from(a + b > 8.0);
            text.push_str(&format!("{i},{a},{b},{y}\n"));
        }
        CsvTable::from_reader(text.as_bytes()).unwrap()
    }

    fn data_params() -> DataParams {
        DataParams {
            target_column: "y".into(),
            ignored_columns: vec!["id".into()],
            positive_label: "1".into(),
            label_names: vec!["0".into(), "1".into()],
        }
    }

    fn model() -> ModelParams {
        ModelParams {
            n_base_estimators: 50,
            n_incremental_estimators: 10,
            incremental_rounds: 5,
            sample_fraction: 1.0,
            seed: 0,
        }
    }

    fn train(round: u64, base: Option<Vec<u8>>) -> Message {
        Message::TrainRequest(TrainRequest {
            round_index: round,
            model_params: model(),
            seed: 3,
            base_forest: base,
        })
    }

    fn now(r: Reply) -> Message {
        match r {
            Reply::Now(m) => m,
            Reply::Parked { .. } => panic!("unexpected park"),
        }
    }

    fn ready(policy: ApprovalPolicy) -> Datasite {
        let site = Datasite::new("s1", table(), policy);
        assert_eq!(
            now(site.handle(Message::SetDataParams(data_params()))),
            Message::DataParamsAck
        );
        site
    }

    #[test]
    fn base_round_then_warm_start() {
        let site = ready(ApprovalPolicy::AutoApprove);
        let Message::TrainResponse(r0) = now(site.handle(train(0, None))) else {
            panic!()
        };
        assert_eq!(decode_forest(&r0.forest).unwrap().len(), 50);
        assert_eq!(r0.n_samples, 40);
        let Message::TrainResponse(r1) = now(site.handle(train(1, Some(r0.forest)))) else {
            panic!()
        };
        assert_eq!(decode_forest(&r1.forest).unwrap().len(), 60);
        assert_eq!(site.round_index(), 2);
    }

    #[test]
    fn stale_round_is_refused() {
        let site = ready(ApprovalPolicy::AutoApprove);
        now(site.handle(train(0, None)));
        let m = now(site.handle(train(0, None)));
        assert!(
            matches!(
                m,
                Message::Error {
                    code: ErrorCode::StaleRound,
                    ..
                }
            ),
            "{m:?}"
        );
    }

    #[test]
    fn manual_mode_parks_and_gates() {
        let site = ready(ApprovalPolicy::Manual);
        let Reply::Parked {
            request_id,
            decision,
            request,
            ..
        } = site.handle(train(0, None))
        else {
            panic!("expected park")
        };
        // Executing before approval is refused and does not train.
        let m = site.execute(request_id, request.clone());
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::NotApproved,
                ..
            }
        ));
        assert_eq!(site.round_index(), 0);
        assert_eq!(site.queue().pending().len(), 1);

        site.approve(request_id).unwrap();
        let d = decision.recv().unwrap();
        let m = site.resolve_parked(request_id, d, request.clone());
        assert!(matches!(m, Message::TrainResponse(_)));
        assert_eq!(site.round_index(), 1);
        // Exactly once.
        let again = site.execute(request_id, request);
        assert!(matches!(
            again,
            Message::Error {
                code: ErrorCode::NotApproved,
                ..
            }
        ));
        assert!(matches!(
            site.approve(request_id),
            Err(DatasiteError::UnknownRequestId(_))
        ));
    }

    #[test]
    fn reject_answers_rejected() {
        let site = ready(ApprovalPolicy::Manual);
        let Reply::Parked {
            request_id,
            decision,
            request,
            ..
        } = site.handle(train(0, None))
        else {
            panic!()
        };
        site.reject(request_id).unwrap();
        let m = site.resolve_parked(request_id, decision.recv().unwrap(), request);
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::Rejected,
                ..
            }
        ));
        assert_eq!(site.round_index(), 0);
    }

    #[test]
    fn evaluation_on_own_data_beats_base_rate() {
        let site = ready(ApprovalPolicy::AutoApprove);
        let Message::TrainResponse(r) = now(site.handle(train(0, None))) else {
            panic!()
        };
        let Message::EvalResponse(m) = now(site.handle(Message::EvalRequest { forest: r.forest }))
        else {
            panic!()
        };
        let data = Dataset::from_table(&table(), &data_params()).unwrap();
        let counts = data.class_counts();
        let base = *counts.iter().max().unwrap() as f64 / data.n_samples() as f64;
        assert!(m.accuracy >= base);
        assert_eq!(m.n_samples, 40);
    }

    #[test]
    fn eval_rejects_foreign_and_corrupt_forests() {
        let site = ready(ApprovalPolicy::AutoApprove);
        let other = Dataset::from_rows(
            vec!["x".into()],
            &[vec![0.0], vec![1.0]],
            vec![0, 1],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let f = fit_forest(&other, &ForestParams::with_estimators(2, 0)).unwrap();
        let m = now(site.handle(Message::EvalRequest {
            forest: encode_forest(&f),
        }));
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::SchemaMismatch,
                ..
            }
        ));
        let m = now(site.handle(Message::EvalRequest {
            forest: b"junk".to_vec(),
        }));
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::CorruptModel,
                ..
            }
        ));
    }

    #[test]
    fn requests_need_data_params() {
        let site = Datasite::new("s", table(), ApprovalPolicy::AutoApprove);
        let m = now(site.handle(train(0, None)));
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::DataParamsNotSet,
                ..
            }
        ));
    }

    #[test]
    fn owner_settings_must_agree() {
        let site = Datasite::new("s", table(), ApprovalPolicy::AutoApprove).with_owner_settings(
            OwnerSettings {
                target_column: Some("a".into()),
                ..OwnerSettings::default()
            },
        );
        let m = now(site.handle(Message::SetDataParams(data_params())));
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::SchemaMismatch,
                ..
            }
        ));
        let site = ready(ApprovalPolicy::AutoApprove);
        let mut p = data_params();
        p.positive_label = "0".into();
        let m = now(site.handle(Message::SetDataParams(p)));
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::SchemaMismatch,
                ..
            }
        ));
    }

    #[test]
    fn hello_checks_version() {
        let site = ready(ApprovalPolicy::AutoApprove);
        let m = now(site.handle(Message::Hello {
            protocol_version: 99,
            peer: "c".into(),
        }));
        assert!(matches!(
            m,
            Message::Error {
                code: ErrorCode::UnsupportedVersion,
                ..
            }
        ));
    }

    #[test]
    fn subsampling_is_deterministic() {
        let data = Dataset::from_table(&table(), &data_params()).unwrap();
        let a = subsample(&data, 0.5, 1).unwrap();
        let b = subsample(&data, 0.5, 1).unwrap();
        assert_eq!(a.n_samples(), 20);
        assert_eq!(a, b);
        assert!(subsample(&data, 1.0, 1).is_none());
    }
}
