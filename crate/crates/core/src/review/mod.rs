//! Mandatory human approval of generated replies.
//!
//! Every reply waits in a queue for at most [`REVIEW_WINDOW`]. A reviewer
//! approves or rejects it with one of six reasons; anything still pending at
//! the deadline expires and is never posted.

mod desk;
mod item;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use desk::{audit_postings, PostingReceipt, ReplyPoster, ReviewDesk};
pub use item::{Decision, DecisionRecord, ReviewItem, ReviewKind, ReviewState, REVIEW_WINDOW};

use crate::store::StoreError;
use crate::types::{PostId, ReplyId, Timestamp};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("review item {0} already exists")]
    Duplicate(ReplyId),
    #[error("review item {0} not found")]
    NotFound(ReplyId),
    #[error("reply fails validation: {0}")]
    Invariant(String),
    #[error("review item {item_id} expired at {deadline}")]
    Expired { item_id: ReplyId, deadline: Timestamp },
    #[error("review item {item_id} is already {state}")]
    AlreadyDecided { item_id: ReplyId, state: ReviewState },
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("review item {item_id} cannot be posted while {state}")]
    InvalidState { item_id: ReplyId, state: ReviewState },
    #[error("posting failed: {0}")]
    TransientPost(String),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// The six reasons a reviewer may give for blocking a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionCode {
    NotHarmfulFalsePositive,
    LowQuality,
    OffTopic,
    Hallucination,
    ArticleMismatch,
    Controversial,
}

impl RejectionCode {
    pub const ALL: [RejectionCode; 6] = [
        RejectionCode::NotHarmfulFalsePositive,
        RejectionCode::LowQuality,
        RejectionCode::OffTopic,
        RejectionCode::Hallucination,
        RejectionCode::ArticleMismatch,
        RejectionCode::Controversial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectionCode::NotHarmfulFalsePositive => "not_harmful_false_positive",
            RejectionCode::LowQuality => "low_quality",
            RejectionCode::OffTopic => "off_topic",
            RejectionCode::Hallucination => "hallucination",
            RejectionCode::ArticleMismatch => "article_mismatch",
            RejectionCode::Controversial => "controversial",
        }
    }
}

impl fmt::Display for RejectionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RejectionCode {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RejectionCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ReviewError::InvalidDecision(format!("unknown rejection code `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReason {
    pub code: RejectionCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RejectionReason {
    pub fn new(code: RejectionCode) -> Self {
        Self { code, note: None }
    }
}

/// One reply that reached the platform.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostingRecord {
    pub item_id: ReplyId,
    pub target_post_id: PostId,
    pub posted_id: PostId,
    pub posted_at: Timestamp,
    pub text: String,
    pub snapshot_due_at: Timestamp,
}
