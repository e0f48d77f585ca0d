//! A/B protocol: scheduled classification windows, seeded arm assignment,
//! review hand-off and metric snapshots.

mod assign;
mod config;
mod pipeline;
mod saturation;
mod sim;
mod snapshot;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::{assign_group, audit_randomization, ArmAssigner, RngCheckpoint};
pub use config::{ExperimentConfig, ScheduleConfig};
pub use pipeline::{Experiment, ExperimentStatus, Pipeline, WindowSummary};
pub use saturation::{saturated_share, saturation_check};
pub use sim::{
    corpus_period, replay_corpus, run_replay, scripted_generator, ReplayInputs, ReplayOutcome,
    SimPlatform, SimPosting,
};
pub use snapshot::{
    run_due_snapshots, snapshot_final, MetricsSource, SnapshotKind, SnapshotRunSummary,
    SnapshotTask,
};

use crate::classifier::ClassifierError;
use crate::ingest::{IngestError, MetricsSnapshot};
use crate::responder::ResponderError;
use crate::review::{RejectionCode, ReviewError};
use crate::store::StoreError;
use crate::types::{Arm, PostId, Timestamp};

/// Delay between posting (or control assignment) and the initial snapshot.
pub const INITIAL_SNAPSHOT_DELAY: Duration = Duration::minutes(15);

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("config: {0}")]
    Config(String),
    #[error("post {0} is already assigned")]
    DuplicateAssignment(PostId),
    #[error("no assignment for post {0}")]
    NotFound(PostId),
    #[error("final snapshot for {post_id} is not due until {due}")]
    NotYetDue { post_id: PostId, due: Timestamp },
    #[error("another window run is in progress")]
    WindowBusy,
    #[error("metrics lookup failed: {0}")]
    Metrics(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Responder(#[from] ResponderError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// Where an assignment is in its lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Monitoring,
    FinalSnapshotted,
    Deleted,
    UnpostedFinalSnapshotted,
}

impl AssignmentStatus {
    pub fn is_terminal(self) -> bool {
        self != Self::Monitoring
    }
}

/// One detected harmful post and everything the experiment recorded about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentAssignment {
    pub post_id: PostId,
    pub arm: Arm,
    pub assigned_at: Timestamp,
    /// Zero-based index of the draw in the seeded sequence.
    pub draw: u64,
    #[serde(default)]
    pub initial_snapshot: Option<MetricsSnapshot>,
    #[serde(default)]
    pub final_snapshot: Option<MetricsSnapshot>,
    #[serde(default)]
    pub reply_initial_snapshot: Option<MetricsSnapshot>,
    #[serde(default)]
    pub reply_final_snapshot: Option<MetricsSnapshot>,
    #[serde(default)]
    pub posted_reply_id: Option<PostId>,
    #[serde(default)]
    pub posted_at: Option<Timestamp>,
    #[serde(default)]
    pub has_link: bool,
    #[serde(default)]
    pub was_first_reply: bool,
    #[serde(default)]
    pub unposted: bool,
    #[serde(default)]
    pub deleted: bool,
    #[serde(default)]
    pub rejection: Option<RejectionCode>,
    /// When the post left the analysis set, for either arm.
    #[serde(default)]
    pub removed_at: Option<Timestamp>,
}

impl ExperimentAssignment {
    pub fn new(post_id: PostId, arm: Arm, assigned_at: Timestamp, draw: u64) -> Self {
        Self {
            post_id,
            arm,
            assigned_at,
            draw,
            initial_snapshot: None,
            final_snapshot: None,
            reply_initial_snapshot: None,
            reply_final_snapshot: None,
            posted_reply_id: None,
            posted_at: None,
            has_link: false,
            was_first_reply: false,
            unposted: false,
            deleted: false,
            rejection: None,
            removed_at: None,
        }
    }

    pub fn with_posting(
        &self,
        posted_id: PostId,
        has_link: bool,
        was_first_reply: bool,
        now: Timestamp,
    ) -> Self {
        Self {
            posted_reply_id: Some(posted_id),
            posted_at: Some(now),
            has_link,
            was_first_reply,
            ..self.clone()
        }
    }

    /// The intervention was never posted (expired review or failed generation).
    pub fn with_unposted(&self, now: Timestamp) -> Self {
        Self {
            unposted: true,
            removed_at: self.removed_at.or(Some(now)),
            ..self.clone()
        }
    }

    /// A reviewer rejected the reply, or flagged a control post as a false
    /// positive.
    pub fn with_rejection(&self, code: RejectionCode, now: Timestamp) -> Self {
        Self {
            rejection: Some(code),
            unposted: self.unposted || self.arm == Arm::Experimental,
            removed_at: self.removed_at.or(Some(now)),
            ..self.clone()
        }
    }

    pub fn status(&self) -> AssignmentStatus {
        if self.deleted {
            AssignmentStatus::Deleted
        } else if self.final_snapshot.is_none() {
            AssignmentStatus::Monitoring
        } else if self.unposted {
            AssignmentStatus::UnpostedFinalSnapshotted
        } else {
            AssignmentStatus::FinalSnapshotted
        }
    }

    /// Whether the assignment contributes an observation to the analysis.
    pub fn is_analyzable(&self) -> bool {
        !self.deleted
            && !self.unposted
            && self.rejection.is_none()
            && self.initial_snapshot.is_some()
            && self.final_snapshot.is_some()
            && (self.arm == Arm::Control || self.posted_reply_id.is_some())
    }

    pub fn check_invariants(&self, monitoring_period: Duration) -> Result<(), String> {
        if self.arm == Arm::Control && self.posted_reply_id.is_some() {
            return Err(format!("control post {} has a posted reply", self.post_id));
        }
        if let (Some(i), Some(f)) = (&self.initial_snapshot, &self.final_snapshot) {
            if f.taken_at < i.taken_at + monitoring_period {
                return Err(format!(
                    "final snapshot of {} precedes the end of monitoring",
                    self.post_id
                ));
            }
        }
        Ok(())
    }
}
