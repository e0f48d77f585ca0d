//! Offline stand-in for the platform, driven by a replay corpus with
//! per-post scripts, and a driver that runs the whole protocol over it.

use std::collections::BTreeMap;

use chrono::Duration;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::pipeline::{Experiment, Pipeline, WindowSummary};
use super::ScheduleConfig;
use crate::classifier::{EmbeddingProvider, HateModel};
use crate::responder::{Responder, TemplateClient};
use crate::store::Store;
use super::snapshot::MetricsSource;
use super::ExperimentError;
use crate::ingest::{CorpusEntry, IngestError, MetricsSnapshot, PostRecord, PostSource, ReplaySource, ScriptedDecision};
use crate::review::{Decision, RejectionReason, ReplyPoster, ReviewError, ReviewKind, ReviewState};
use crate::types::{PostId, ReviewerId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPosting {
    pub posted_id: PostId,
    pub in_reply_to: PostId,
    pub text: String,
}

/// Corpus-backed platform. Posts replied to by the bot switch to their
/// scripted replied trajectory.
pub struct SimPlatform {
    source: ReplaySource,
    index: BTreeMap<PostId, usize>,
    posted: Mutex<Vec<SimPosting>>,
}

impl SimPlatform {
    pub fn new(entries: Vec<CorpusEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.post_id.clone(), i))
            .collect();
        Self {
            source: ReplaySource::new(entries),
            index,
            posted: Mutex::new(Vec::new()),
        }
    }

    pub fn entry(&self, id: &PostId) -> Option<&CorpusEntry> {
        self.index.get(id).map(|&i| &self.source.entries()[i])
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        self.source.entries()
    }

    /// Every reply that reached the platform, in posting order.
    pub fn postings(&self) -> Vec<SimPosting> {
        self.posted.lock().clone()
    }

    fn replied(&self, target: &PostId) -> bool {
        self.posted.lock().iter().any(|p| &p.in_reply_to == target)
    }
}

impl PostSource for SimPlatform {
    fn search(&mut self, query: &str, now: Timestamp) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError> {
        let mut found = self.source.search(query, now)?;
        for (post, metrics) in &mut found {
            if self.replied(&post.post_id) {
                if let Some(e) = self.entry(&post.post_id) {
                    *metrics = e.metrics_at(now, true);
                }
            }
        }
        Ok(found)
    }
}

impl MetricsSource for SimPlatform {
    fn lookup(&self, post_id: &PostId, now: Timestamp) -> Result<Option<MetricsSnapshot>, ExperimentError> {
        if let Some(e) = self.entry(post_id) {
            if e.is_deleted_at(now) {
                return Ok(None);
            }
            return Ok(Some(e.metrics_at(now, self.replied(post_id))));
        }
        let ours = self.posted.lock().iter().any(|p| &p.posted_id == post_id);
        Ok(ours.then(|| MetricsSnapshot {
            post_id: post_id.clone(),
            taken_at: now,
            likes: 0,
            impressions: 0,
            replies: 0,
        }))
    }
}

impl ReplyPoster for SimPlatform {
    fn post_reply(&self, in_reply_to: &PostId, text: &str) -> Result<PostId, ReviewError> {
        if self.entry(in_reply_to).is_none() {
            return Err(ReviewError::TransientPost(format!("unknown post {in_reply_to}")));
        }
        let mut posted = self.posted.lock();
        let posted_id = PostId::new(format!("sim-reply-{}", posted.len() + 1));
        posted.push(SimPosting {
            posted_id: posted_id.clone(),
            in_reply_to: in_reply_to.clone(),
            text: text.to_owned(),
        });
        Ok(posted_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub windows: Vec<WindowSummary>,
    pub approved: usize,
    pub rejected: usize,
    pub expired: usize,
    pub posted: usize,
    pub finished_at: Option<Timestamp>,
}

/// Offsets of scripted actions after each window start.
const DECIDE_AFTER: Duration = Duration::minutes(10);
const SNAPSHOT_AFTER: Duration = Duration::minutes(30);
const EXPIRE_AFTER: Duration = Duration::minutes(46);

/// Runs every window in `[from, to]`, applies the corpus review scripts
/// (approve by default), posts approvals, takes snapshots as they come due,
/// and finally advances time until every snapshot task has run.
pub fn run_replay(
    exp: &Experiment<'_>,
    platform: &mut SimPlatform,
    reviewer: &ReviewerId,
    from: Timestamp,
    to: Timestamp,
) -> Result<ReplayOutcome, ExperimentError> {
    let mut out = ReplayOutcome::default();
    let desk = exp.desk();
    for start in exp.schedule().windows_between(from, to) {
        exp.run_due_snapshots(platform, start)?;
        out.windows.push(exp.run_window(platform, start)?);

        let at = start + DECIDE_AFTER;
        for item in desk.list(Some(ReviewState::Pending)) {
            let script = platform
                .entry(&item.target.post_id)
                .and_then(|e| e.sim.as_ref())
                .and_then(|s| s.review)
                .unwrap_or(ScriptedDecision::Approve);
            let decision = match (script, item.kind) {
                (ScriptedDecision::Expire, _) => continue,
                (ScriptedDecision::Approve, _) => Decision::Approve,
                (ScriptedDecision::Reject(code), ReviewKind::Intervention) => {
                    Decision::Reject(RejectionReason::new(code))
                }
                (ScriptedDecision::Reject(code), ReviewKind::ControlCheck) => {
                    if code == crate::review::RejectionCode::NotHarmfulFalsePositive {
                        Decision::Reject(RejectionReason::new(code))
                    } else {
                        Decision::Approve
                    }
                }
            };
            let decided = desk.decide(&item.item_id, decision, reviewer.clone(), at)?;
            match decided.state {
                ReviewState::Approved => {
                    out.approved += 1;
                    if decided.kind == ReviewKind::Intervention {
                        desk.post_approved(&decided.item_id, platform, at)?;
                        out.posted += 1;
                    }
                }
                _ => out.rejected += 1,
            }
        }
        exp.run_due_snapshots(platform, start + SNAPSHOT_AFTER)?;
        out.expired += desk.expire_overdue(start + EXPIRE_AFTER)?;
    }
    let mut now = to;
    loop {
        let next = exp.store().read(|s| {
            s.tasks
                .values()
                .filter(|t| t.completed_at.is_none())
                .map(|t| t.due_at)
                .min()
        });
        let Some(due) = next else { break };
        now = now.max(due);
        exp.run_due_snapshots(platform, now)?;
    }
    out.finished_at = Some(now);
    Ok(out)
}

/// Generator for replays: each post's scripted reply text, or the template.
pub fn scripted_generator(entries: &[CorpusEntry]) -> TemplateClient {
    let mut client = TemplateClient::new();
    for e in entries {
        if let Some(text) = e.sim.as_ref().and_then(|s| s.reply_text.as_ref()) {
            client.insert(e.text.clone(), text.clone());
        }
    }
    client
}

/// From the earliest post to the latest post plus `max_age`.
pub fn corpus_period(entries: &[CorpusEntry], max_age: Duration) -> Option<(Timestamp, Timestamp)> {
    let first = entries.iter().map(|e| e.created_at).min()?;
    let last = entries.iter().map(|e| e.created_at).max()?;
    Some((first, last + max_age))
}

/// Everything needed to replay a corpus through the full protocol.
pub struct ReplayInputs<'a> {
    pub schedule: ScheduleConfig,
    pub query: String,
    pub seed: u64,
    pub model: &'a HateModel,
    pub embedder: &'a dyn EmbeddingProvider,
    pub responder: &'a Responder,
    pub corpus: Vec<CorpusEntry>,
    pub reviewer: ReviewerId,
}

pub fn replay_corpus(
    store: &Store,
    inputs: ReplayInputs<'_>,
) -> Result<(ReplayOutcome, SimPlatform), ExperimentError> {
    let Some((from, to)) = corpus_period(&inputs.corpus, inputs.schedule.max_age) else {
        return Ok((ReplayOutcome::default(), SimPlatform::new(inputs.corpus)));
    };
    let generator = scripted_generator(&inputs.corpus);
    let mut platform = SimPlatform::new(inputs.corpus);
    let exp = Experiment::new(
        store,
        inputs.schedule,
        inputs.query,
        inputs.seed,
        Pipeline {
            model: inputs.model,
            embedder: inputs.embedder,
            responder: inputs.responder,
            generator: &generator,
        },
    )?;
    let outcome = run_replay(&exp, &mut platform, &inputs.reviewer, from, to)?;
    Ok((outcome, platform))
}
