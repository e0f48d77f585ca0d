use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::assign::{assign_group, ArmAssigner};
use super::snapshot::{run_due_snapshots, MetricsSource, SnapshotRunSummary};
use super::{AssignmentStatus, ExperimentError, ScheduleConfig};
use crate::classifier::{embed, predict, EmbeddingProvider, HateModel};
use crate::ingest::{fetch_recent, persist, MetricsSnapshot, PostRecord, PostSource};
use crate::responder::{GenerationClient, Responder};
use crate::review::{ReviewDesk, ReviewState};
use crate::store::{Event, Store};
use crate::types::{Arm, Timestamp};

/// Per-window counts. `fetched` counts posts not seen in earlier windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window_start: Timestamp,
    pub ran_at: Timestamp,
    pub fetched: usize,
    pub already_seen: usize,
    pub unclassifiable: usize,
    pub classified_harmful: usize,
    pub assigned_exp: usize,
    pub assigned_ctrl: usize,
    pub enqueued: usize,
    pub generation_failures: usize,
}

impl WindowSummary {
    pub fn is_conserved(&self) -> bool {
        self.fetched >= self.classified_harmful
            && self.classified_harmful == self.assigned_exp + self.assigned_ctrl
            && self.assigned_exp == self.enqueued + self.generation_failures
    }
}

/// The models and clients a window run needs.
pub struct Pipeline<'a> {
    pub model: &'a HateModel,
    pub embedder: &'a dyn EmbeddingProvider,
    pub responder: &'a Responder,
    pub generator: &'a dyn GenerationClient,
}

pub struct Experiment<'a> {
    store: &'a Store,
    schedule: ScheduleConfig,
    query: String,
    seed: u64,
    pipeline: Pipeline<'a>,
    run_lock: Mutex<()>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentStatus {
    pub seed: Option<u64>,
    pub assigned_exp: usize,
    pub assigned_ctrl: usize,
    pub pending_review: usize,
    pub posted: usize,
    pub unposted: usize,
    pub removed: usize,
    pub monitoring: usize,
    pub final_snapshotted: usize,
    pub deleted: usize,
    pub tasks_pending: usize,
    pub tasks_due: usize,
    pub windows: usize,
}

impl ExperimentStatus {
    pub fn from_store(store: &Store, now: Timestamp) -> Self {
        store.read(|s| {
            let mut st = ExperimentStatus {
                seed: s.rng.map(|r| r.seed),
                windows: s.windows.len(),
                posted: s.postings.len(),
                pending_review: s.reviews.values().filter(|r| r.state == ReviewState::Pending).count(),
                ..Default::default()
            };
            for a in s.assignments.values() {
                match a.arm {
                    Arm::Experimental => st.assigned_exp += 1,
                    Arm::Control => st.assigned_ctrl += 1,
                }
                st.unposted += usize::from(a.unposted);
                st.removed += usize::from(a.removed_at.is_some());
                match a.status() {
                    AssignmentStatus::Monitoring => st.monitoring += 1,
                    AssignmentStatus::Deleted => st.deleted += 1,
                    _ => st.final_snapshotted += 1,
                }
            }
            for t in s.tasks.values().filter(|t| t.completed_at.is_none()) {
                st.tasks_pending += 1;
                st.tasks_due += usize::from(t.due_at <= now);
            }
            st
        })
    }
}

impl<'a> Experiment<'a> {
    pub fn new(
        store: &'a Store,
        schedule: ScheduleConfig,
        query: impl Into<String>,
        seed: u64,
        pipeline: Pipeline<'a>,
    ) -> Result<Self, ExperimentError> {
        schedule.validate()?;
        store.read(|s| ArmAssigner::resume(s, seed))?;
        Ok(Self {
            store,
            schedule,
            query: query.into(),
            seed,
            pipeline,
            run_lock: Mutex::new(()),
        })
    }

    pub fn store(&self) -> &Store {
        self.store
    }

    pub fn schedule(&self) -> &ScheduleConfig {
        &self.schedule
    }

    pub fn desk(&self) -> ReviewDesk<'a> {
        let urls = self.pipeline.responder.known_urls().into_iter().map(str::to_owned).collect();
        ReviewDesk::new(self.store, urls)
    }

    pub fn status(&self, now: Timestamp) -> ExperimentStatus {
        ExperimentStatus::from_store(self.store, now)
    }

    pub fn run_due_snapshots(
        &self,
        metrics: &dyn MetricsSource,
        now: Timestamp,
    ) -> Result<SnapshotRunSummary, ExperimentError> {
        run_due_snapshots(self.store, &self.schedule, metrics, now)
    }

    /// Fetch, classify, assign and, for the experimental arm, generate and
    /// enqueue for review. Only one run may be active at a time.
    pub fn run_window(
        &self,
        source: &mut dyn PostSource,
        now: Timestamp,
    ) -> Result<WindowSummary, ExperimentError> {
        let _guard = self.run_lock.try_lock().ok_or(ExperimentError::WindowBusy)?;
        let window_start = self.schedule.window_for(now)?;
        let found = fetch_recent(source, &self.query, now, self.schedule.max_age)?;

        let (seen, fresh): (Vec<_>, Vec<_>) = self.store.read(|s| {
            found
                .into_iter()
                .partition::<Vec<(PostRecord, MetricsSnapshot)>, _>(|(p, _)| s.posts.contains_key(&p.post_id))
        });
        let snapshots: Vec<MetricsSnapshot> = seen.iter().chain(&fresh).map(|(_, m)| m.clone()).collect();
        let records: Vec<PostRecord> = fresh.iter().map(|(p, _)| p.clone()).collect();
        persist(self.store, &records, &snapshots)?;

        let mut summary = WindowSummary {
            window_start,
            ran_at: now,
            fetched: fresh.len(),
            already_seen: seen.len(),
            unclassifiable: 0,
            classified_harmful: 0,
            assigned_exp: 0,
            assigned_ctrl: 0,
            enqueued: 0,
            generation_failures: 0,
        };
        let mut assigner = self.store.read(|s| ArmAssigner::resume(s, self.seed))?;
        let desk = self.desk();
        let p = &self.pipeline;
        for (post, _) in &fresh {
            let emb = match embed(&post.text, p.embedder) {
                Ok(e) => e,
                Err(e) => {
                    warn!(post = %post.post_id, error = %e, "skipping unclassifiable post");
                    summary.unclassifiable += 1;
                    continue;
                }
            };
            if !predict(p.model, &emb)?.is_harmful {
                continue;
            }
            summary.classified_harmful += 1;
            let a = assign_group(self.store, &mut assigner, &post.post_id, &self.schedule, now)?;
            match a.arm {
                Arm::Control => {
                    summary.assigned_ctrl += 1;
                    desk.enqueue_control_check(post.clone(), now)?;
                }
                Arm::Experimental => {
                    summary.assigned_exp += 1;
                    match p.responder.respond(post, &emb, p.generator, now) {
                        Ok(reply) => {
                            desk.enqueue(reply, post.clone(), now)?;
                            summary.enqueued += 1;
                        }
                        Err(e) => {
                            warn!(post = %post.post_id, error = %e, "no reply generated");
                            summary.generation_failures += 1;
                            self.store.transact(|_| {
                                Ok::<_, ExperimentError>((vec![Event::Assignment(a.with_unposted(now))], ()))
                            })?;
                        }
                    }
                }
            }
        }
        self.store.transact(|_| Ok::<_, ExperimentError>((vec![Event::Window(summary.clone())], ())))?;
        info!(
            fetched = summary.fetched,
            harmful = summary.classified_harmful,
            exp = summary.assigned_exp,
            ctrl = summary.assigned_ctrl,
            "window complete"
        );
        Ok(summary)
    }
}
