//! Post acquisition: query rendering, recency-filtered fetching from a live
//! platform or a replay corpus, and idempotent persistence.

mod corpus;
mod live;
mod query;

use chrono::Duration;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Event, Store, StoreError};
use crate::types::{AuthorId, PostId, Timestamp};

pub use corpus::{ScriptedDecision, load_corpus, parse_corpus, CorpusEntry, ReplaySource, SimScript, TrajectoryPoint};
pub use live::{Attempt, Backoff, PlatformClient, PlatformConfig, PlatformError, DEFAULT_API_BASE};
pub(crate) use live::{classify_status, transport};
pub use query::{build_query, QueryMatcher, QuerySpec};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid query spec: {0}")]
    InvalidSpec(String),
    #[error("source unavailable: {0}")]
    TransientSource(String),
    #[error("corpus line {line}: {message}")]
    CorpusFormat { line: usize, message: String },
    #[error("invalid post record {post_id}: {message}")]
    InvalidRecord { post_id: PostId, message: String },
    #[error("integrity violation for post {post_id}: {message}")]
    Integrity { post_id: PostId, message: String },
    #[error("storage: {0}")]
    Storage(#[from] StoreError),
}

/// A platform post as ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: PostId,
    pub author_id: AuthorId,
    pub text: String,
    pub created_at: Timestamp,
    pub is_reply: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<PostId>,
    pub language_tag: String,
}

impl PostRecord {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.is_reply != self.parent_id.is_some() {
            return Err(IngestError::InvalidRecord {
                post_id: self.post_id.clone(),
                message: "is_reply must be set exactly when parent_id is present".into(),
            });
        }
        Ok(())
    }
}

/// Public counters of one post at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub post_id: PostId,
    pub taken_at: Timestamp,
    pub likes: u64,
    pub impressions: u64,
    pub replies: u64,
}

/// Something that can answer a recent-search query.
pub trait PostSource {
    /// Posts matching `query` that exist at `now`, with their current counters
    /// stamped at `now`. No recency filtering happens here.
    fn search(
        &mut self,
        query: &str,
        now: Timestamp,
    ) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError>;
}

/// Runs the query and keeps posts with `0 <= window_end - created_at <= max_age`.
pub fn fetch_recent(
    source: &mut dyn PostSource,
    query: &str,
    window_end: Timestamp,
    max_age: Duration,
) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError> {
    if max_age <= Duration::zero() {
        return Err(IngestError::InvalidSpec("max_age must be positive".into()));
    }
    let found = source.search(query, window_end)?;
    Ok(found
        .into_iter()
        .filter(|(post, _)| is_recent(post.created_at, window_end, max_age))
        .collect())
}

pub fn is_recent(created_at: Timestamp, window_end: Timestamp, max_age: Duration) -> bool {
    let age = window_end - created_at;
    age >= Duration::zero() && age <= max_age
}

/// Writes posts and snapshots, skipping exact duplicates. Returns the number
/// of posts plus snapshots that were new.
pub fn persist(
    store: &Store,
    records: &[PostRecord],
    snapshots: &[MetricsSnapshot],
) -> Result<usize, IngestError> {
    store.transact(|state| {
        let mut events = Vec::new();
        let mut pending_posts = std::collections::BTreeMap::new();
        for record in records {
            record.validate()?;
            let existing = state
                .posts
                .get(&record.post_id)
                .or_else(|| pending_posts.get(&record.post_id));
            match existing {
                Some(old) if old == record => continue,
                Some(old) => {
                    let message = if old.text != record.text {
                        "text differs from stored post"
                    } else {
                        "fields differ from stored post"
                    };
                    return Err(IngestError::Integrity {
                        post_id: record.post_id.clone(),
                        message: message.into(),
                    });
                }
                None => {
                    pending_posts.insert(record.post_id.clone(), record.clone());
                    events.push(Event::Post(record.clone()));
                }
            }
        }
        let mut pending_snaps: std::collections::BTreeMap<&PostId, Vec<&MetricsSnapshot>> =
            Default::default();
        for snap in snapshots {
            let history = state.snapshots.get(&snap.post_id);
            let staged = pending_snaps.entry(&snap.post_id).or_default();
            let all = history.into_iter().flatten().chain(staged.iter().copied());
            let mut last: Option<&MetricsSnapshot> = None;
            let mut duplicate = false;
            for s in all {
                if s.taken_at == snap.taken_at {
                    if s == snap {
                        duplicate = true;
                    } else {
                        return Err(IngestError::Integrity {
                            post_id: snap.post_id.clone(),
                            message: format!("conflicting snapshot at {}", snap.taken_at),
                        });
                    }
                }
                last = Some(s);
            }
            if duplicate {
                continue;
            }
            if let Some(last) = last {
                if last.taken_at > snap.taken_at {
                    return Err(IngestError::Integrity {
                        post_id: snap.post_id.clone(),
                        message: format!(
                            "snapshot at {} precedes latest stored snapshot at {}",
                            snap.taken_at, last.taken_at
                        ),
                    });
                }
            }
            staged.push(snap);
            events.push(Event::Snapshot(snap.clone()));
        }
        let written = events.len();
        Ok((events, written))
    })
}
