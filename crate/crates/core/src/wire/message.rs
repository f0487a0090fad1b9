//! Protocol messages and their payload encoding.
//!
//! A payload is a fixed sequence of tagged values. Each value starts with a
//! one-byte tag:
//!
//! | tag  | value   | body                                   |
//! |------|---------|----------------------------------------|
//! | 0x00 | none    | (empty)                                |
//! | 0x01 | u64     | 8 bytes little-endian                  |
//! | 0x02 | f64     | 8 bytes little-endian IEEE-754         |
//! | 0x03 | bool    | 1 byte, 0 or 1                         |
//! | 0x04 | string  | u32 LE byte length, UTF-8 bytes        |
//! | 0x05 | list    | u32 LE element count, tagged elements  |
//! | 0x06 | bytes   | u32 LE byte length, raw bytes          |
//!
//! [`MessageKind::layouts`] lists, per kind, the field sequences a payload
//! may have. Decoding rejects anything that does not match one of them
//! exactly, so the layouts table is the whole protocol surface. No layout
//! has a numeric list, which keeps feature rows off the wire.

use thiserror::Error;

use super::frame::Envelope;
use crate::metrics::{Confusion, Metrics};
use crate::params::{DataParams, ModelParams};

pub const PROTOCOL_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Hello = 1,
    SetDataParams = 2,
    SetModelParams = 3,
    TrainRequest = 4,
    TrainResponse = 5,
    EvalRequest = 6,
    EvalResponse = 7,
    ApprovalPending = 8,
    Error = 9,
}

impl MessageKind {
    pub const ALL: [MessageKind; 9] = [
        MessageKind::Hello,
        MessageKind::SetDataParams,
        MessageKind::SetModelParams,
        MessageKind::TrainRequest,
        MessageKind::TrainResponse,
        MessageKind::EvalRequest,
        MessageKind::EvalResponse,
        MessageKind::ApprovalPending,
        MessageKind::Error,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| *k as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Hello => "HELLO",
            MessageKind::SetDataParams => "SET_DATA_PARAMS",
            MessageKind::SetModelParams => "SET_MODEL_PARAMS",
            MessageKind::TrainRequest => "TRAIN_REQUEST",
            MessageKind::TrainResponse => "TRAIN_RESPONSE",
            MessageKind::EvalRequest => "EVAL_REQUEST",
            MessageKind::EvalResponse => "EVAL_RESPONSE",
            MessageKind::ApprovalPending => "APPROVAL_PENDING",
            MessageKind::Error => "ERROR",
        }
    }

    /// Allowed payload layouts for this kind.
    pub fn layouts(self) -> &'static [&'static [Field]] {
        match self {
            MessageKind::Hello => &[HELLO],
            MessageKind::SetDataParams => &[DATA_PARAMS, ACK],
            MessageKind::SetModelParams => &[MODEL_PARAMS, ACK],
            MessageKind::TrainRequest => &[TRAIN_REQUEST],
            MessageKind::TrainResponse => &[TRAIN_RESPONSE],
            MessageKind::EvalRequest => &[EVAL_REQUEST],
            MessageKind::EvalResponse => &[EVAL_RESPONSE],
            MessageKind::ApprovalPending => &[APPROVAL_PENDING],
            MessageKind::Error => &[ERROR],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    U64,
    F64,
    Bool,
    Str,
    StrList,
    Bytes,
    OptBytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    pub name: &'static str,
    pub ty: FieldType,
}

const fn f(name: &'static str, ty: FieldType) -> Field {
    Field { name, ty }
}

use FieldType::*;

const ACK: &[Field] = &[f("applied", Bool)];
const HELLO: &[Field] = &[f("protocol_version", U64), f("peer", Str)];
const DATA_PARAMS: &[Field] = &[
    f("target_column", Str),
    f("ignored_columns", StrList),
    f("positive_label", Str),
    f("label_names", StrList),
];
const MODEL_PARAMS: &[Field] = &[
    f("n_base_estimators", U64),
    f("n_incremental_estimators", U64),
    f("incremental_rounds", U64),
    f("sample_fraction", F64),
    f("seed", U64),
];
const TRAIN_REQUEST: &[Field] = &[
    f("round_index", U64),
    f("n_base_estimators", U64),
    f("n_incremental_estimators", U64),
    f("incremental_rounds", U64),
    f("sample_fraction", F64),
    f("model_seed", U64),
    f("train_seed", U64),
    f("base_forest", OptBytes),
];
const TRAIN_RESPONSE: &[Field] = &[
    f("round_index", U64),
    f("n_samples", U64),
    f("forest", Bytes),
];
const EVAL_REQUEST: &[Field] = &[f("forest", Bytes)];
const EVAL_RESPONSE: &[Field] = &[
    f("accuracy", F64),
    f("precision", F64),
    f("recall", F64),
    f("f1", F64),
    f("tp", U64),
    f("fp", U64),
    f("fn", U64),
    f("tn", U64),
    f("n_samples", U64),
];
const APPROVAL_PENDING: &[Field] = &[f("request_id", U64), f("summary", Str)];
const ERROR: &[Field] = &[f("code", Str), f("message", Str)];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    U64(u64),
    F64(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
    Bytes(Vec<u8>),
}

impl Value {
    fn matches(&self, ty: FieldType) -> bool {
        match (self, ty) {
            (Value::U64(_), U64) | (Value::F64(_), F64) | (Value::Bool(_), Bool) => true,
            (Value::Str(_), Str) | (Value::Bytes(_), Bytes) => true,
            (Value::None | Value::Bytes(_), OptBytes) => true,
            (Value::List(items), StrList) => items.iter().all(|v| matches!(v, Value::Str(_))),
            _ => false,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        match self {
            Value::None => out.push(0x00),
            Value::U64(v) => {
                out.push(0x01);
                out.extend_from_slice(&v.to_le_bytes());
            }
            Value::F64(v) => {
                out.push(0x02);
                out.extend_from_slice(&v.to_le_bytes());
            }
            Value::Bool(v) => {
                out.push(0x03);
                out.push(u8::from(*v));
            }
            Value::Str(s) => {
                out.push(0x04);
                out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                out.extend_from_slice(s.as_bytes());
            }
            Value::List(items) => {
                out.push(0x05);
                out.extend_from_slice(&(items.len() as u32).to_le_bytes());
                for item in items {
                    item.write(out);
                }
            }
            Value::Bytes(b) => {
                out.push(0x06);
                out.extend_from_slice(&(b.len() as u32).to_le_bytes());
                out.extend_from_slice(b);
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessageError {
    #[error("payload truncated")]
    Truncated,
    #[error("unknown value tag {0:#04x}")]
    BadTag(u8),
    #[error("invalid boolean byte {0}")]
    BadBool(u8),
    #[error("string is not valid UTF-8")]
    InvalidUtf8,
    #[error("lists nest too deeply")]
    TooDeep,
    #[error("{kind} payload does not match any layout: {detail}")]
    SchemaViolation { kind: &'static str, detail: String },
    #[error("invalid field value: {0}")]
    InvalidField(String),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MessageError> {
        let end = self.pos.checked_add(n).ok_or(MessageError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(MessageError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, MessageError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn value(&mut self, depth: usize) -> Result<Value, MessageError> {
        let tag = self.take(1)?[0];
        Ok(match tag {
            0x00 => Value::None,
            0x01 => Value::U64(u64::from_le_bytes(self.take(8)?.try_into().unwrap())),
            0x02 => Value::F64(f64::from_le_bytes(self.take(8)?.try_into().unwrap())),
            0x03 => match self.take(1)?[0] {
                0 => Value::Bool(false),
                1 => Value::Bool(true),
                b => return Err(MessageError::BadBool(b)),
            },
            0x04 => {
                let n = self.u32()?;
                let bytes = self.take(n)?;
                Value::Str(
                    String::from_utf8(bytes.to_vec()).map_err(|_| MessageError::InvalidUtf8)?,
                )
            }
            0x05 => {
                if depth >= 4 {
                    return Err(MessageError::TooDeep);
                }
                let n = self.u32()?;
                // Every element needs at least its tag byte.
                if n > self.buf.len() - self.pos {
                    return Err(MessageError::Truncated);
                }
                Value::List(
                    (0..n)
                        .map(|_| self.value(depth + 1))
                        .collect::<Result<_, _>>()?,
                )
            }
            0x06 => {
                let n = self.u32()?;
                Value::Bytes(self.take(n)?.to_vec())
            }
            t => return Err(MessageError::BadTag(t)),
        })
    }
}

/// Parses a payload into its tagged values.
pub fn decode_values(payload: &[u8]) -> Result<Vec<Value>, MessageError> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let mut values = Vec::new();
    while r.pos < payload.len() {
        values.push(r.value(0)?);
    }
    Ok(values)
}

pub fn encode_values(values: &[Value]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        v.write(&mut out);
    }
    out
}

/// Machine-readable error codes carried by ERROR messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrorCode {
    NotApproved,
    Rejected,
    UnknownRequestId,
    SchemaMismatch,
    StaleRound,
    TrainingFailed,
    CorruptModel,
    DataParamsNotSet,
    ModelParamsNotSet,
    UnsupportedVersion,
    BadRequest,
    Internal,
    Other(String),
}

impl ErrorCode {
    pub fn as_str(&self) -> &str {
        match self {
            ErrorCode::NotApproved => "NotApproved",
            ErrorCode::Rejected => "Rejected",
            ErrorCode::UnknownRequestId => "UnknownRequestId",
            ErrorCode::SchemaMismatch => "SchemaMismatch",
            ErrorCode::StaleRound => "StaleRound",
            ErrorCode::TrainingFailed => "TrainingFailed",
            ErrorCode::CorruptModel => "CorruptModel",
            ErrorCode::DataParamsNotSet => "DataParamsNotSet",
            ErrorCode::ModelParamsNotSet => "ModelParamsNotSet",
            ErrorCode::UnsupportedVersion => "UnsupportedVersion",
            ErrorCode::BadRequest => "BadRequest",
            ErrorCode::Internal => "Internal",
            ErrorCode::Other(s) => s,
        }
    }

    pub fn parse(s: &str) -> Self {
        match s {
            "NotApproved" => ErrorCode::NotApproved,
            "Rejected" => ErrorCode::Rejected,
            "UnknownRequestId" => ErrorCode::UnknownRequestId,
            "SchemaMismatch" => ErrorCode::SchemaMismatch,
            "StaleRound" => ErrorCode::StaleRound,
            "TrainingFailed" => ErrorCode::TrainingFailed,
            "CorruptModel" => ErrorCode::CorruptModel,
            "DataParamsNotSet" => ErrorCode::DataParamsNotSet,
            "ModelParamsNotSet" => ErrorCode::ModelParamsNotSet,
            "UnsupportedVersion" => ErrorCode::UnsupportedVersion,
            "BadRequest" => ErrorCode::BadRequest,
            "Internal" => ErrorCode::Internal,
            other => ErrorCode::Other(other.to_owned()),
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRequest {
    pub round_index: u64,
    pub model_params: ModelParams,
    pub seed: u64,
    /// Serialized global forest to warm-start from; absent in round 0.
    pub base_forest: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResponse {
    pub round_index: u64,
    pub n_samples: u64,
    pub forest: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello { protocol_version: u16, peer: String },
    SetDataParams(DataParams),
    DataParamsAck,
    SetModelParams(ModelParams),
    ModelParamsAck,
    TrainRequest(TrainRequest),
    TrainResponse(TrainResponse),
    EvalRequest { forest: Vec<u8> },
    EvalResponse(Metrics),
    ApprovalPending { request_id: u64, summary: String },
    Error { code: ErrorCode, message: String },
}

fn strs(v: &[String]) -> Value {
    Value::List(v.iter().cloned().map(Value::Str).collect())
}

impl Message {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Message::Error {
            code,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Hello { .. } => MessageKind::Hello,
            Message::SetDataParams(_) | Message::DataParamsAck => MessageKind::SetDataParams,
            Message::SetModelParams(_) | Message::ModelParamsAck => MessageKind::SetModelParams,
            Message::TrainRequest(_) => MessageKind::TrainRequest,
            Message::TrainResponse(_) => MessageKind::TrainResponse,
            Message::EvalRequest { .. } => MessageKind::EvalRequest,
            Message::EvalResponse(_) => MessageKind::EvalResponse,
            Message::ApprovalPending { .. } => MessageKind::ApprovalPending,
            Message::Error { .. } => MessageKind::Error,
        }
    }

    pub fn to_values(&self) -> Vec<Value> {
        use Value as V;
        match self {
            Message::Hello {
                protocol_version,
                peer,
            } => vec![V::U64(*protocol_version as u64), V::Str(peer.clone())],
            Message::SetDataParams(p) => vec![
                V::Str(p.target_column.clone()),
                strs(&p.ignored_columns),
                V::Str(p.positive_label.clone()),
                strs(&p.label_names),
            ],
            Message::DataParamsAck | Message::ModelParamsAck => vec![V::Bool(true)],
            Message::SetModelParams(m) => model_values(m),
            Message::TrainRequest(t) => {
                let mut v = vec![V::U64(t.round_index)];
                v.extend(model_values(&t.model_params));
                v.push(V::U64(t.seed));
                v.push(match &t.base_forest {
                    Some(b) => V::Bytes(b.clone()),
                    None => V::None,
                });
                v
            }
            Message::TrainResponse(t) => vec![
                V::U64(t.round_index),
                V::U64(t.n_samples),
                V::Bytes(t.forest.clone()),
            ],
            Message::EvalRequest { forest } => vec![V::Bytes(forest.clone())],
            Message::EvalResponse(m) => vec![
                V::F64(m.accuracy),
                V::F64(m.precision),
                V::F64(m.recall),
                V::F64(m.f1),
                V::U64(m.confusion.tp),
                V::U64(m.confusion.fp),
                V::U64(m.confusion.fn_),
                V::U64(m.confusion.tn),
                V::U64(m.n_samples),
            ],
            Message::ApprovalPending {
                request_id,
                summary,
            } => vec![V::U64(*request_id), V::Str(summary.clone())],
            Message::Error { code, message } => {
                vec![V::Str(code.as_str().to_owned()), V::Str(message.clone())]
            }
        }
    }

    pub fn encode_payload(&self) -> Vec<u8> {
        encode_values(&self.to_values())
    }

    pub fn to_envelope(&self, correlation_id: u64) -> Envelope {
        Envelope {
            kind: self.kind(),
            correlation_id,
            payload: self.encode_payload(),
        }
    }

    pub fn from_envelope(envelope: &Envelope) -> Result<Self, MessageError> {
        Self::decode(envelope.kind, &envelope.payload)
    }

    pub fn decode(kind: MessageKind, payload: &[u8]) -> Result<Self, MessageError> {
        let values = decode_values(payload)?;
        let layout = kind
            .layouts()
            .iter()
            .find(|l| {
                l.len() == values.len() && l.iter().zip(&values).all(|(f, v)| v.matches(f.ty))
            })
            .ok_or_else(|| MessageError::SchemaViolation {
                kind: kind.name(),
                detail: format!("{} values", values.len()),
            })?;
        let mut it = values.into_iter();
        let mut next = || it.next().unwrap();
        let is_ack = layout.len() == 1 && layout[0].ty == Bool;
        Ok(match kind {
            MessageKind::Hello => {
                let v = u(next());
                let protocol_version = u16::try_from(v)
                    .map_err(|_| MessageError::InvalidField(format!("protocol version {v}")))?;
                Message::Hello {
                    protocol_version,
                    peer: s(next()),
                }
            }
            MessageKind::SetDataParams if is_ack => Message::DataParamsAck,
            MessageKind::SetModelParams if is_ack => Message::ModelParamsAck,
            MessageKind::SetDataParams => Message::SetDataParams(DataParams {
                target_column: s(next()),
                ignored_columns: sl(next()),
                positive_label: s(next()),
                label_names: sl(next()),
            }),
            MessageKind::SetModelParams => Message::SetModelParams(model_from(&mut next)?),
            MessageKind::TrainRequest => {
                let round_index = u(next());
                let model_params = model_from(&mut next)?;
                let seed = u(next());
                let base_forest = match next() {
                    Value::Bytes(b) => Some(b),
                    _ => None,
                };
                Message::TrainRequest(TrainRequest {
                    round_index,
                    model_params,
                    seed,
                    base_forest,
                })
            }
            MessageKind::TrainResponse => Message::TrainResponse(TrainResponse {
                round_index: u(next()),
                n_samples: u(next()),
                forest: b(next()),
            }),
            MessageKind::EvalRequest => Message::EvalRequest { forest: b(next()) },
            MessageKind::EvalResponse => {
                let accuracy = fl(next());
                let precision = fl(next());
                let recall = fl(next());
                let f1 = fl(next());
                let confusion = Confusion {
                    tp: u(next()),
                    fp: u(next()),
                    fn_: u(next()),
                    tn: u(next()),
                };
                Message::EvalResponse(Metrics {
                    accuracy,
                    precision,
                    recall,
                    f1,
                    confusion,
                    n_samples: u(next()),
                })
            }
            MessageKind::ApprovalPending => Message::ApprovalPending {
                request_id: u(next()),
                summary: s(next()),
            },
            MessageKind::Error => Message::Error {
                code: ErrorCode::parse(&s(next())),
                message: s(next()),
            },
        })
    }
}

fn model_values(m: &ModelParams) -> Vec<Value> {
    vec![
        Value::U64(m.n_base_estimators as u64),
        Value::U64(m.n_incremental_estimators as u64),
        Value::U64(m.incremental_rounds as u64),
        Value::F64(m.sample_fraction),
        Value::U64(m.seed),
    ]
}

fn model_from(next: &mut impl FnMut() -> Value) -> Result<ModelParams, MessageError> {
    let small = |v: u64| {
        u32::try_from(v).map_err(|_| MessageError::InvalidField(format!("{v} does not fit u32")))
    };
    Ok(ModelParams {
        n_base_estimators: small(u(next()))?,
        n_incremental_estimators: small(u(next()))?,
        incremental_rounds: small(u(next()))?,
        sample_fraction: fl(next()),
        seed: u(next()),
    })
}

// Accessors for values already checked against the layout.
fn u(v: Value) -> u64 {
    match v {
        Value::U64(x) => x,
        _ => unreachable!("layout checked"),
    }
}

fn fl(v: Value) -> f64 {
    match v {
        Value::F64(x) => x,
        _ => unreachable!("layout checked"),
    }
}

fn s(v: Value) -> String {
    match v {
        Value::Str(x) => x,
        _ => unreachable!("layout checked"),
    }
}

fn b(v: Value) -> Vec<u8> {
    match v {
        Value::Bytes(x) => x,
        _ => unreachable!("layout checked"),
    }
}

fn sl(v: Value) -> Vec<String> {
    match v {
        Value::List(items) => items.into_iter().map(s).collect(),
        _ => unreachable!("layout checked"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn samples() -> Vec<Message> {
        let model = ModelParams {
            n_base_estimators: 50,
            n_incremental_estimators: 10,
            incremental_rounds: 5,
            sample_fraction: 1.0,
            seed: 7,
        };
        vec![
            Message::Hello {
                protocol_version: PROTOCOL_VERSION,
                peer: "coordinator".into(),
            },
            Message::SetDataParams(DataParams {
                target_column: "cid".into(),
                ignored_columns: vec!["pidnum".into()],
                positive_label: "1".into(),
                label_names: vec!["0".into(), "1".into()],
            }),
            Message::DataParamsAck,
            Message::SetModelParams(model.clone()),
            Message::ModelParamsAck,
            Message::TrainRequest(TrainRequest {
                round_index: 0,
                model_params: model.clone(),
                seed: 11,
                base_forest: None,
            }),
            Message::TrainRequest(TrainRequest {
                round_index: 3,
                model_params: model,
                seed: 12,
                base_forest: Some(b"FRF1...".to_vec()),
            }),
            Message::TrainResponse(TrainResponse {
                round_index: 1,
                n_samples: 570,
                forest: vec![1, 2, 3],
            }),
            Message::EvalRequest { forest: vec![9; 4] },
            Message::EvalResponse(Metrics::from_predictions(&[0, 1, 1], &[0, 1, 0], 1)),
            Message::ApprovalPending {
                request_id: 4,
                summary: "train round 0".into(),
            },
            Message::error(ErrorCode::Rejected, "data owner declined"),
            Message::error(ErrorCode::Other("Custom".into()), ""),
        ]
    }

    #[test]
    fn every_message_round_trips() {
        for m in samples() {
            let env = m.to_envelope(42);
            assert_eq!(Message::from_envelope(&env).unwrap(), m);
        }
    }

    #[test]
    fn samples_cover_every_kind() {
        for kind in MessageKind::ALL {
            assert!(samples().iter().any(|m| m.kind() == kind), "{kind:?}");
            assert_eq!(MessageKind::from_byte(kind as u8), Some(kind));
        }
        assert_eq!(MessageKind::from_byte(0), None);
        assert_eq!(MessageKind::from_byte(10), None);
    }

    #[test]
    fn wrong_layout_is_rejected() {
        let payload = encode_values(&[Value::U64(1)]);
        assert!(matches!(
            Message::decode(MessageKind::TrainResponse, &payload),
            Err(MessageError::SchemaViolation { .. })
        ));
        let hello = Message::Hello {
            protocol_version: 1,
            peer: "x".into(),
        };
        let payload = hello.encode_payload();
        assert!(Message::decode(MessageKind::EvalRequest, &payload).is_err());
    }

    #[test]
    fn malformed_values() {
        assert_eq!(decode_values(&[0x09]).unwrap_err(), MessageError::BadTag(9));
        assert_eq!(
            decode_values(&[0x01, 0, 0]).unwrap_err(),
            MessageError::Truncated
        );
        assert_eq!(
            decode_values(&[0x03, 2]).unwrap_err(),
            MessageError::BadBool(2)
        );
        assert_eq!(
            decode_values(&[0x04, 1, 0, 0, 0, 0xff]).unwrap_err(),
            MessageError::InvalidUtf8
        );
        assert_eq!(
            decode_values(&[0x05, 0xff, 0xff, 0xff, 0xff]).unwrap_err(),
            MessageError::Truncated
        );
    }

    #[test]
    fn blobs_are_only_forests_and_lists_only_names() {
        for kind in MessageKind::ALL {
            for layout in kind.layouts() {
                for field in *layout {
                    match field.ty {
                        FieldType::Bytes | FieldType::OptBytes => {
                            assert!(field.name.ends_with("forest"), "{kind:?}.{}", field.name)
                        }
                        FieldType::StrList => {
                            assert_eq!(kind, MessageKind::SetDataParams);
                            assert!(
                                field.name.ends_with("_columns") || field.name == "label_names"
                            );
                        }
                        _ => {}
                    }
                }
            }
        }
    }
}
