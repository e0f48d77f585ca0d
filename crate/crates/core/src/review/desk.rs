use std::collections::BTreeMap;

use super::item::{Decision, ReviewItem, ReviewKind, ReviewState, REVIEW_WINDOW};
use super::{PostingRecord, RejectionCode, ReviewError};
use crate::experiment::{SnapshotKind, SnapshotTask, INITIAL_SNAPSHOT_DELAY};
use crate::ingest::{PlatformClient, PostRecord};
use crate::responder::CandidateReply;
use crate::store::{Event, Store, StoreState};
use crate::types::{PostId, ReplyId, ReviewerId, Timestamp};

/// Publishes approved replies.
pub trait ReplyPoster: Send + Sync {
    fn post_reply(&self, in_reply_to: &PostId, text: &str) -> Result<PostId, ReviewError>;
}

impl ReplyPoster for PlatformClient {
    fn post_reply(&self, in_reply_to: &PostId, text: &str) -> Result<PostId, ReviewError> {
        PlatformClient::post_reply(self, in_reply_to, text)
            .map_err(|e| ReviewError::TransientPost(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingReceipt {
    pub posted_id: PostId,
    pub snapshot_due_at: Timestamp,
    /// True when the item had been posted before and nothing was sent.
    pub already_posted: bool,
}

/// Store-backed review queue. All transitions are serialized by the store's
/// write lock, so concurrent deciders see first-writer-wins.
pub struct ReviewDesk<'a> {
    store: &'a Store,
    known_urls: Vec<String>,
}

impl<'a> ReviewDesk<'a> {
    pub fn new(store: &'a Store, known_urls: Vec<String>) -> Self {
        Self { store, known_urls }
    }

    pub fn enqueue(
        &self,
        reply: CandidateReply,
        target: PostRecord,
        now: Timestamp,
    ) -> Result<ReviewItem, ReviewError> {
        let urls: Vec<&str> = self.known_urls.iter().map(String::as_str).collect();
        let item = ReviewItem::intervention(reply.clone(), target, now, &urls)?;
        self.store.transact(|state| {
            if state.reviews.contains_key(&item.item_id) {
                return Err(ReviewError::Duplicate(item.item_id.clone()));
            }
            Ok((vec![Event::Reply(reply), Event::Review(item.clone())], item))
        })
    }

    pub fn enqueue_control_check(
        &self,
        target: PostRecord,
        now: Timestamp,
    ) -> Result<ReviewItem, ReviewError> {
        let item = ReviewItem::control_check(target, now);
        self.store.transact(|state| {
            if state.reviews.contains_key(&item.item_id) {
                return Err(ReviewError::Duplicate(item.item_id.clone()));
            }
            Ok((vec![Event::Review(item.clone())], item))
        })
    }

    pub fn decide(
        &self,
        item_id: &ReplyId,
        decision: Decision,
        reviewer: ReviewerId,
        now: Timestamp,
    ) -> Result<ReviewItem, ReviewError> {
        self.store
            .transact(|state| {
                let item = state
                    .reviews
                    .get(item_id)
                    .ok_or_else(|| ReviewError::NotFound(item_id.clone()))?;
                match item.decided(decision, reviewer, now) {
                    Ok(updated) => {
                        let mut events = vec![Event::Review(updated.clone())];
                        if let Some(e) = removal_event(state, &updated, now) {
                            events.push(e);
                        }
                        Ok((events, Ok(updated)))
                    }
                    Err(err @ ReviewError::Expired { .. }) => {
                        let expired = item.expired(now).expect("overdue pending item");
                        let mut events = vec![Event::Review(expired.clone())];
                        if let Some(e) = removal_event(state, &expired, now) {
                            events.push(e);
                        }
                        Ok((events, Err(err)))
                    }
                    Err(err) => Err(err),
                }
            })
            .and_then(|r| r)
    }

    /// Expires every pending item past its deadline. Returns how many changed.
    pub fn expire_overdue(&self, now: Timestamp) -> Result<usize, ReviewError> {
        self.store.transact(|state| {
            let mut events = Vec::new();
            for item in state.reviews.values() {
                if let Some(expired) = item.expired(now) {
                    if let Some(e) = removal_event(state, &expired, now) {
                        events.push(e);
                    }
                    events.push(Event::Review(expired));
                }
            }
            let n = events
                .iter()
                .filter(|e| matches!(e, Event::Review(_)))
                .count();
            Ok::<_, ReviewError>((events, n))
        })
    }

    pub fn get(&self, item_id: &ReplyId) -> Option<ReviewItem> {
        self.store.read(|s| s.reviews.get(item_id).cloned())
    }

    /// Items in `state` (all items when `None`), earliest deadline first.
    pub fn list(&self, state: Option<ReviewState>) -> Vec<ReviewItem> {
        let mut items: Vec<ReviewItem> = self.store.read(|s| {
            s.reviews
                .values()
                .filter(|i| state.is_none_or(|st| i.state == st))
                .cloned()
                .collect()
        });
        items.sort_by(|a, b| a.deadline.cmp(&b.deadline).then_with(|| a.item_id.cmp(&b.item_id)));
        items
    }

    /// Count of rejected items per code; every code is present.
    pub fn rejection_histogram(&self) -> BTreeMap<RejectionCode, usize> {
        self.store.read(rejection_histogram)
    }

    /// Posts an approved intervention exactly once and schedules the first
    /// metrics snapshot for the target and the posted reply.
    pub fn post_approved(
        &self,
        item_id: &ReplyId,
        poster: &dyn ReplyPoster,
        now: Timestamp,
    ) -> Result<PostingReceipt, ReviewError> {
        self.store.transact(|state| {
            if let Some(p) = state.postings.get(item_id) {
                return Ok((
                    Vec::new(),
                    PostingReceipt {
                        posted_id: p.posted_id.clone(),
                        snapshot_due_at: p.snapshot_due_at,
                        already_posted: true,
                    },
                ));
            }
            let item = state
                .reviews
                .get(item_id)
                .ok_or_else(|| ReviewError::NotFound(item_id.clone()))?;
            let reply = match (&item.kind, &item.reply, item.state) {
                (ReviewKind::Intervention, Some(reply), ReviewState::Approved) => reply,
                _ => {
                    return Err(ReviewError::InvalidState {
                        item_id: item_id.clone(),
                        state: item.state,
                    })
                }
            };
            if item.decision.as_ref().is_some_and(|d| now < d.decided_at) {
                return Err(ReviewError::Invariant(format!("{item_id} cannot be posted before its approval")));
            }
            let posted_id = poster.post_reply(&item.target.post_id, &reply.text)?;
            let due = now + INITIAL_SNAPSHOT_DELAY;
            let posting = PostingRecord {
                item_id: item_id.clone(),
                target_post_id: item.target.post_id.clone(),
                posted_id: posted_id.clone(),
                posted_at: now,
                text: reply.text.clone(),
                snapshot_due_at: due,
            };
            let task = SnapshotTask {
                id: state.next_task_id(),
                due_at: due,
                kind: SnapshotKind::Initial,
                subject: item.target.post_id.clone(),
                post_ids: vec![item.target.post_id.clone(), posted_id.clone()],
                completed_at: None,
            };
            let mut events = vec![Event::Posting(posting), Event::Task(task)];
            if let Some(a) = state.assignments.get(&item.target.post_id) {
                let pre_replies = state
                    .latest_snapshot(&item.target.post_id)
                    .map_or(0, |s| s.replies);
                events.push(Event::Assignment(a.with_posting(
                    posted_id.clone(),
                    reply.has_link(),
                    pre_replies == 0,
                    now,
                )));
            }
            Ok((
                events,
                PostingReceipt {
                    posted_id,
                    snapshot_due_at: due,
                    already_posted: false,
                },
            ))
        })
    }
}

/// Keeps the experiment assignment in step with review outcomes: expired
/// interventions mark the target unposted, false-positive rejections record
/// when the post left the analysis.
fn removal_event(state: &StoreState, item: &ReviewItem, now: Timestamp) -> Option<Event> {
    let a = state.assignments.get(&item.target.post_id)?;
    match (item.kind, item.state) {
        (ReviewKind::Intervention, ReviewState::Expired) => Some(Event::Assignment(a.with_unposted(now))),
        (ReviewKind::Intervention, ReviewState::Rejected) => Some(Event::Assignment(
            a.with_rejection(item.rejection_code().expect("rejected item has a code"), now),
        )),
        (ReviewKind::ControlCheck, ReviewState::Rejected) => Some(Event::Assignment(
            a.with_rejection(RejectionCode::NotHarmfulFalsePositive, now),
        )),
        _ => None,
    }
}

pub(crate) fn rejection_histogram(state: &StoreState) -> BTreeMap<RejectionCode, usize> {
    let mut h: BTreeMap<RejectionCode, usize> = RejectionCode::ALL.iter().map(|c| (*c, 0)).collect();
    for code in state.reviews.values().filter_map(ReviewItem::rejection_code) {
        *h.entry(code).or_default() += 1;
    }
    h
}

/// Postings without a matching approval, or whose text differs from the
/// approved reply. Empty means the safety invariant holds.
pub fn audit_postings(state: &StoreState) -> Vec<String> {
    let mut problems = Vec::new();
    for p in state.postings.values() {
        let Some(item) = state.reviews.get(&p.item_id) else {
            problems.push(format!("posting {} has no review item", p.posted_id));
            continue;
        };
        let approved_at = match &item.decision {
            Some(d) if d.decision == Decision::Approve && item.state == ReviewState::Approved => d.decided_at,
            _ => {
                problems.push(format!("posting {} lacks an approve decision", p.posted_id));
                continue;
            }
        };
        if approved_at > p.posted_at {
            problems.push(format!("posting {} precedes its approval", p.posted_id));
        }
        if approved_at > item.enqueued_at + REVIEW_WINDOW {
            problems.push(format!("posting {} approved after the deadline", p.posted_id));
        }
        if item.reply.as_ref().map(|r| &r.text) != Some(&p.text) {
            problems.push(format!("posting {} text differs from the approved reply", p.posted_id));
        }
    }
    problems
}
