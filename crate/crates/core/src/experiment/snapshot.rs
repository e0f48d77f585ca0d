use serde::{Deserialize, Serialize};

use super::{ExperimentAssignment, ExperimentError, ScheduleConfig};
use crate::ingest::{MetricsSnapshot, PlatformClient};
use crate::store::{Event, Store, StoreState};
use crate::types::{PostId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Initial,
    Final,
}

/// A scheduled metrics capture for one assignment. `post_ids` lists the
/// target first, then the bot reply when there is one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotTask {
    pub id: u64,
    pub due_at: Timestamp,
    pub kind: SnapshotKind,
    pub subject: PostId,
    pub post_ids: Vec<PostId>,
    #[serde(default)]
    pub completed_at: Option<Timestamp>,
}

/// Current public counters of a post; `None` when it no longer exists.
pub trait MetricsSource: Send + Sync {
    fn lookup(&self, post_id: &PostId, now: Timestamp) -> Result<Option<MetricsSnapshot>, ExperimentError>;
}

impl MetricsSource for PlatformClient {
    fn lookup(&self, post_id: &PostId, now: Timestamp) -> Result<Option<MetricsSnapshot>, ExperimentError> {
        self.lookup_metrics(post_id, now)
            .map_err(|e| ExperimentError::Metrics(e.to_string()))
    }
}

/// Freezes the target's (and the bot reply's) current counters as final.
pub fn snapshot_final(
    assignment: &ExperimentAssignment,
    schedule: &ScheduleConfig,
    metrics: &dyn MetricsSource,
    now: Timestamp,
) -> Result<ExperimentAssignment, ExperimentError> {
    let due = final_due(assignment, schedule);
    if now < due {
        return Err(ExperimentError::NotYetDue {
            post_id: assignment.post_id.clone(),
            due,
        });
    }
    let Some(target) = metrics.lookup(&assignment.post_id, now)? else {
        return Ok(ExperimentAssignment {
            deleted: true,
            ..assignment.clone()
        });
    };
    let reply = match &assignment.posted_reply_id {
        Some(id) => metrics.lookup(id, now)?,
        None => None,
    };
    Ok(ExperimentAssignment {
        final_snapshot: Some(target),
        reply_final_snapshot: reply,
        ..assignment.clone()
    })
}

/// Monitoring ends one period after the later of assignment and the initial
/// snapshot, or at the global end when that is later.
pub(crate) fn final_due(a: &ExperimentAssignment, schedule: &ScheduleConfig) -> Timestamp {
    let start = a
        .initial_snapshot
        .as_ref()
        .map_or(a.assigned_at, |s| s.taken_at.max(a.assigned_at));
    schedule.final_due(start)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRunSummary {
    pub initial: usize,
    pub final_: usize,
    pub deleted: usize,
    pub deferred: usize,
}

/// Runs every pending task due at `now`, oldest first.
pub fn run_due_snapshots(
    store: &Store,
    schedule: &ScheduleConfig,
    metrics: &dyn MetricsSource,
    now: Timestamp,
) -> Result<SnapshotRunSummary, ExperimentError> {
    let mut due: Vec<SnapshotTask> = store.read(|s| {
        s.tasks
            .values()
            .filter(|t| t.completed_at.is_none() && t.due_at <= now)
            .cloned()
            .collect()
    });
    due.sort_by(|a, b| a.due_at.cmp(&b.due_at).then(a.id.cmp(&b.id)));
    let mut summary = SnapshotRunSummary::default();
    for task in due {
        store.transact(|state| run_task(state, &task, schedule, metrics, now, &mut summary))?;
    }
    Ok(summary)
}

fn completed(task: &SnapshotTask, now: Timestamp) -> Event {
    Event::Task(SnapshotTask {
        completed_at: Some(now),
        ..task.clone()
    })
}

fn run_task(
    state: &StoreState,
    task: &SnapshotTask,
    schedule: &ScheduleConfig,
    metrics: &dyn MetricsSource,
    now: Timestamp,
    summary: &mut SnapshotRunSummary,
) -> Result<(Vec<Event>, ()), ExperimentError> {
    let current = state.tasks.get(&task.id).unwrap_or(task);
    if current.completed_at.is_some() {
        return Ok((Vec::new(), ()));
    }
    let a = state
        .assignments
        .get(&task.subject)
        .ok_or_else(|| ExperimentError::NotFound(task.subject.clone()))?;
    if a.deleted {
        return Ok((vec![completed(current, now)], ()));
    }
    match task.kind {
        SnapshotKind::Initial => {
            if a.initial_snapshot.is_some() {
                return Ok((vec![completed(current, now)], ()));
            }
            let Some(target) = metrics.lookup(&task.subject, now)? else {
                summary.deleted += 1;
                let mut events = vec![
                    completed(current, now),
                    Event::Assignment(ExperimentAssignment {
                        deleted: true,
                        ..a.clone()
                    }),
                ];
                events.extend(final_tasks(state, &task.subject).map(|t| completed(t, now)));
                return Ok((events, ()));
            };
            let reply = match task.post_ids.get(1) {
                Some(id) => metrics.lookup(id, now)?,
                None => None,
            };
            let updated = ExperimentAssignment {
                initial_snapshot: Some(target.clone()),
                reply_initial_snapshot: reply.clone(),
                ..a.clone()
            };
            let mut events = vec![Event::Snapshot(target)];
            events.extend(reply.map(Event::Snapshot));
            let due = final_due(&updated, schedule);
            events.extend(final_tasks(state, &task.subject).map(|t| {
                Event::Task(SnapshotTask {
                    due_at: due,
                    ..t.clone()
                })
            }));
            events.push(Event::Assignment(updated));
            events.push(completed(current, now));
            summary.initial += 1;
            Ok((events, ()))
        }
        SnapshotKind::Final => {
            if a.final_snapshot.is_some() {
                return Ok((vec![completed(current, now)], ()));
            }
            let updated = match snapshot_final(a, schedule, metrics, now) {
                Ok(u) => u,
                Err(ExperimentError::NotYetDue { due, .. }) => {
                    summary.deferred += 1;
                    return Ok((
                        vec![Event::Task(SnapshotTask {
                            due_at: due,
                            ..current.clone()
                        })],
                        (),
                    ));
                }
                Err(e) => return Err(e),
            };
            let mut events = Vec::new();
            if updated.deleted {
                summary.deleted += 1;
            } else {
                summary.final_ += 1;
                events.extend(updated.final_snapshot.clone().map(Event::Snapshot));
                events.extend(updated.reply_final_snapshot.clone().map(Event::Snapshot));
            }
            events.push(Event::Assignment(updated));
            events.push(completed(current, now));
            Ok((events, ()))
        }
    }
}

fn final_tasks<'s>(state: &'s StoreState, subject: &'s PostId) -> impl Iterator<Item = &'s SnapshotTask> {
    state
        .tasks
        .values()
        .filter(move |t| t.kind == SnapshotKind::Final && &t.subject == subject && t.completed_at.is_none())
}
