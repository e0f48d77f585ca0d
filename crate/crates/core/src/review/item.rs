use std::fmt;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{RejectionCode, RejectionReason, ReviewError};
use crate::ingest::PostRecord;
use crate::responder::CandidateReply;
use crate::types::{ReplyId, ReviewerId, Timestamp};

/// Time a reviewer has to decide.
pub const REVIEW_WINDOW: Duration = Duration::minutes(45);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Approved,
    Rejected,
    Expired,
}

impl ReviewState {
    pub fn is_terminal(self) -> bool {
        self != ReviewState::Pending
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewState::Pending => "pending",
            ReviewState::Approved => "approved",
            ReviewState::Rejected => "rejected",
            ReviewState::Expired => "expired",
        }
    }
}

impl fmt::Display for ReviewState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReviewState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Self::Pending),
            "approved" => Ok(Self::Approved),
            "rejected" => Ok(Self::Rejected),
            "expired" => Ok(Self::Expired),
            other => Err(format!("unknown review state `{other}`")),
        }
    }
}

/// Intervention items carry a generated reply. Control-arm posts get a
/// check item too, on which only the false-positive criterion applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewKind {
    Intervention,
    ControlCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    /// For control checks this means "keep".
    Approve,
    Reject(RejectionReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub reviewer: ReviewerId,
    pub decided_at: Timestamp,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: ReplyId,
    pub kind: ReviewKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<CandidateReply>,
    pub target: PostRecord,
    pub enqueued_at: Timestamp,
    pub deadline: Timestamp,
    pub state: ReviewState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expired_at: Option<Timestamp>,
}

impl ReviewItem {
    pub fn intervention(
        reply: CandidateReply,
        target: PostRecord,
        now: Timestamp,
        known_urls: &[&str],
    ) -> Result<Self, ReviewError> {
        reply
            .validate(known_urls)
            .map_err(|e| ReviewError::Invariant(e.to_string()))?;
        if reply.target_post_id != target.post_id {
            return Err(ReviewError::Invariant(format!(
                "reply targets {} but item targets {}",
                reply.target_post_id, target.post_id
            )));
        }
        Ok(Self {
            item_id: reply.reply_id.clone(),
            kind: ReviewKind::Intervention,
            reply: Some(reply),
            target,
            enqueued_at: now,
            deadline: now + REVIEW_WINDOW,
            state: ReviewState::Pending,
            decision: None,
            expired_at: None,
        })
    }

    pub fn control_check(target: PostRecord, now: Timestamp) -> Self {
        Self {
            item_id: Self::control_id(&target),
            kind: ReviewKind::ControlCheck,
            reply: None,
            target,
            enqueued_at: now,
            deadline: now + REVIEW_WINDOW,
            state: ReviewState::Pending,
            decision: None,
            expired_at: None,
        }
    }

    pub fn control_id(target: &PostRecord) -> ReplyId {
        ReplyId::new(format!("check-{}", target.post_id))
    }

    pub fn is_overdue(&self, now: Timestamp) -> bool {
        now > self.deadline
    }

    pub fn seconds_remaining(&self, now: Timestamp) -> i64 {
        (self.deadline - now).num_seconds().max(0)
    }

    pub fn rejection_code(&self) -> Option<RejectionCode> {
        match &self.decision {
            Some(DecisionRecord {
                decision: Decision::Reject(r),
                ..
            }) => Some(r.code),
            _ => None,
        }
    }

    /// The item in the expired state, or `None` when it is not pending and overdue.
    pub fn expired(&self, now: Timestamp) -> Option<Self> {
        (self.state == ReviewState::Pending && self.is_overdue(now)).then(|| Self {
            state: ReviewState::Expired,
            expired_at: Some(now),
            ..self.clone()
        })
    }

    /// Applies a decision. On an overdue pending item the error is
    /// [`ReviewError::Expired`]; the caller is expected to persist
    /// [`Self::expired`] in that case.
    pub fn decided(
        &self,
        decision: Decision,
        reviewer: ReviewerId,
        now: Timestamp,
    ) -> Result<Self, ReviewError> {
        if self.state != ReviewState::Pending {
            return Err(ReviewError::AlreadyDecided {
                item_id: self.item_id.clone(),
                state: self.state,
            });
        }
        if self.is_overdue(now) {
            return Err(ReviewError::Expired {
                item_id: self.item_id.clone(),
                deadline: self.deadline,
            });
        }
        if let (ReviewKind::ControlCheck, Decision::Reject(r)) = (self.kind, &decision) {
            if r.code != RejectionCode::NotHarmfulFalsePositive {
                return Err(ReviewError::InvalidDecision(format!(
                    "control checks accept only keep or {}, got {}",
                    RejectionCode::NotHarmfulFalsePositive,
                    r.code
                )));
            }
        }
        let state = match decision {
            Decision::Approve => ReviewState::Approved,
            Decision::Reject(_) => ReviewState::Rejected,
        };
        Ok(Self {
            state,
            decision: Some(DecisionRecord {
                reviewer,
                decided_at: now,
                decision,
            }),
            ..self.clone()
        })
    }
}
