//! Per-request approval gate between remote requests and local execution.

use std::collections::{HashSet, VecDeque};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalPolicy {
    #[default]
    AutoApprove,
    Manual,
}

impl std::str::FromStr for ApprovalPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" | "auto_approve" => Ok(ApprovalPolicy::AutoApprove),
            "manual" => Ok(ApprovalPolicy::Manual),
            other => Err(format!("unknown approval policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Approved,
    Rejected,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueueError {
    #[error("unknown request id {0}")]
    UnknownRequestId(u64),
    #[error("request {0} is not approved")]
    NotApproved(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub request_id: u64,
    pub summary: String,
    pub received_at_ms: u64,
}

/// Result of submitting a request.
#[derive(Debug)]
pub enum Ticket {
    /// Approved by policy; may execute now.
    Approved(u64),
    /// Waiting for the data owner. The receiver yields exactly one decision.
    Parked(u64, Receiver<Decision>),
}

impl Ticket {
    pub fn id(&self) -> u64 {
        match self {
            Ticket::Approved(id) | Ticket::Parked(id, _) => *id,
        }
    }
}

struct Waiting {
    request: PendingRequest,
    notify: Sender<Decision>,
}

#[derive(Default)]
struct State {
    next_id: u64,
    pending: VecDeque<Waiting>,
    /// Approved but not yet started.
    approved: HashSet<u64>,
}

/// Request ids are handed out in arrival order starting at 1. An approved
/// id can start executing exactly once.
pub struct ApprovalQueue {
    policy: ApprovalPolicy,
    state: Mutex<State>,
}

impl ApprovalQueue {
    pub fn new(policy: ApprovalPolicy) -> Self {
        Self {
            policy,
            state: Mutex::new(State::default()),
        }
    }

    pub fn policy(&self) -> ApprovalPolicy {
        self.policy
    }

    pub fn submit(&self, summary: impl Into<String>) -> Ticket {
        let mut st = self.state.lock().unwrap();
        st.next_id += 1;
        let id = st.next_id;
        match self.policy {
            ApprovalPolicy::AutoApprove => {
                st.approved.insert(id);
                Ticket::Approved(id)
            }
            ApprovalPolicy::Manual => {
                let (tx, rx) = channel();
                let received_at_ms = SystemTime::now()
                    .duration_since(SystemTime::UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0);
                st.pending.push_back(Waiting {
                    request: PendingRequest {
                        request_id: id,
                        summary: summary.into(),
                        received_at_ms,
                    },
                    notify: tx,
                });
                Ticket::Parked(id, rx)
            }
        }
    }

    fn decide(&self, id: u64, decision: Decision) -> Result<(), QueueError> {
        let mut st = self.state.lock().unwrap();
        let pos = st
            .pending
            .iter()
            .position(|w| w.request.request_id == id)
            .ok_or(QueueError::UnknownRequestId(id))?;
        let waiting = st.pending.remove(pos).unwrap();
        if decision == Decision::Approved {
            st.approved.insert(id);
        }
        // The requester may have gone away; the decision still stands.
        let _ = waiting.notify.send(decision);
        Ok(())
    }

    pub fn approve(&self, id: u64) -> Result<(), QueueError> {
        self.decide(id, Decision::Approved)
    }

    pub fn reject(&self, id: u64) -> Result<(), QueueError> {
        self.decide(id, Decision::Rejected)
    }

    /// Consumes the approval of `id`. Fails if it was never approved or
    /// already started.
    pub fn begin(&self, id: u64) -> Result<(), QueueError> {
        if self.state.lock().unwrap().approved.remove(&id) {
            Ok(())
        } else {
            Err(QueueError::NotApproved(id))
        }
    }

    pub fn pending(&self) -> Vec<PendingRequest> {
        let st = self.state.lock().unwrap();
        st.pending.iter().map(|w| w.request.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_policy_approves_immediately() {
        let q = ApprovalQueue::new(ApprovalPolicy::AutoApprove);
        let t = q.submit("train");
        assert!(matches!(t, Ticket::Approved(1)));
        q.begin(1).unwrap();
        assert_eq!(q.begin(1), Err(QueueError::NotApproved(1)));
        assert!(q.pending().is_empty());
    }

    #[test]
    fn manual_policy_parks_until_decided() {
        let q = ApprovalQueue::new(ApprovalPolicy::Manual);
        let Ticket::Parked(id, rx) = q.submit("train round 0") else {
            panic!("expected parked")
        };
        assert_eq!(q.begin(id), Err(QueueError::NotApproved(id)));
        assert_eq!(q.pending()[0].summary, "train round 0");
        q.approve(id).unwrap();
        assert_eq!(rx.recv().unwrap(), Decision::Approved);
        q.begin(id).unwrap();
        assert_eq!(q.begin(id), Err(QueueError::NotApproved(id)));
    }

    /// Every sequence of two operations on one parked request.
    #[test]
    fn state_machine_enumeration() {
        #[derive(Clone, Copy, Debug)]
        enum Op {
            Approve,
            Reject,
            Begin,
        }
        let ops = [Op::Approve, Op::Reject, Op::Begin];
        for a in ops {
            for b in ops {
                let q = ApprovalQueue::new(ApprovalPolicy::Manual);
                let id = q.submit("x").id();
                let mut decided = false;
                let mut approved = false;
                let mut started = false;
                for op in [a, b] {
                    let got = match op {
                        Op::Approve => q.approve(id),
                        Op::Reject => q.reject(id),
                        Op::Begin => q.begin(id),
                    };
                    let expected = match op {
                        Op::Approve | Op::Reject if decided => {
                            Err(QueueError::UnknownRequestId(id))
                        }
                        Op::Approve => {
                            decided = true;
                            approved = true;
                            Ok(())
                        }
                        Op::Reject => {
                            decided = true;
                            Ok(())
                        }
                        Op::Begin if approved && !started => {
                            started = true;
                            Ok(())
                        }
                        Op::Begin => Err(QueueError::NotApproved(id)),
                    };
                    assert_eq!(got, expected, "{a:?} then {b:?}, at {op:?}");
                }
            }
        }
    }

    #[test]
    fn reject_notifies() {
        let q = ApprovalQueue::new(ApprovalPolicy::Manual);
        let Ticket::Parked(id, rx) = q.submit("eval") else {
            panic!()
        };
        q.reject(id).unwrap();
        assert_eq!(rx.recv().unwrap(), Decision::Rejected);
        assert_eq!(q.approve(id), Err(QueueError::UnknownRequestId(id)));
        assert_eq!(q.approve(99), Err(QueueError::UnknownRequestId(99)));
    }
}
