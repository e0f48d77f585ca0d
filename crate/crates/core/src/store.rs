//! Single-file embedded store.
//!
//! Every mutation is a line of JSON appended to the log file; opening the
//! store replays the log. One writer at a time (the write lock is held for
//! the whole validate-append-apply cycle), any number of readers.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{ExperimentAssignment, RngCheckpoint, SnapshotTask, WindowSummary};
use crate::ingest::{MetricsSnapshot, PostRecord};
use crate::responder::CandidateReply;
use crate::review::{PostingRecord, ReviewItem};
use crate::types::{PostId, ReplyId};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store log {path} line {line} is corrupt: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Event {
    Post(PostRecord),
    Snapshot(MetricsSnapshot),
    Reply(CandidateReply),
    Review(ReviewItem),
    Posting(PostingRecord),
    Assignment(ExperimentAssignment),
    Task(SnapshotTask),
    Rng(RngCheckpoint),
    Window(WindowSummary),
}

/// Materialized view of the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreState {
    pub posts: BTreeMap<PostId, PostRecord>,
    pub snapshots: BTreeMap<PostId, Vec<MetricsSnapshot>>,
    pub replies: BTreeMap<ReplyId, CandidateReply>,
    pub reviews: BTreeMap<ReplyId, ReviewItem>,
    pub postings: BTreeMap<ReplyId, PostingRecord>,
    pub assignments: BTreeMap<PostId, ExperimentAssignment>,
    pub tasks: BTreeMap<u64, SnapshotTask>,
    pub rng: Option<RngCheckpoint>,
    pub windows: Vec<WindowSummary>,
}

impl StoreState {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Post(p) => {
                self.posts.insert(p.post_id.clone(), p);
            }
            Event::Snapshot(s) => self.snapshots.entry(s.post_id.clone()).or_default().push(s),
            Event::Reply(r) => {
                self.replies.insert(r.reply_id.clone(), r);
            }
            Event::Review(item) => {
                self.reviews.insert(item.item_id.clone(), item);
            }
            Event::Posting(p) => {
                self.postings.insert(p.item_id.clone(), p);
            }
            Event::Assignment(a) => {
                self.assignments.insert(a.post_id.clone(), a);
            }
            Event::Task(t) => {
                self.tasks.insert(t.id, t);
            }
            Event::Rng(r) => self.rng = Some(r),
            Event::Window(w) => self.windows.push(w),
        }
    }

    pub fn latest_snapshot(&self, post: &PostId) -> Option<&MetricsSnapshot> {
        self.snapshots.get(post).and_then(|v| v.last())
    }

    pub fn next_task_id(&self) -> u64 {
        self.tasks.keys().next_back().map_or(1, |k| k + 1)
    }
}

pub struct Store {
    path: Option<PathBuf>,
    state: RwLock<StoreState>,
    log: Mutex<Option<BufWriter<File>>>,
    revision: AtomicU64,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.path).finish_non_exhaustive()
    }
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            state: RwLock::new(StoreState::default()),
            log: Mutex::new(None),
            revision: AtomicU64::new(0),
        }
    }

    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut state = StoreState::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.is_empty() {
                    continue;
                }
                let event: Event = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                state.apply(event);
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        Ok(Self {
            path: Some(path),
            state: RwLock::new(state),
            log: Mutex::new(Some(BufWriter::new(file))),
            revision: AtomicU64::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Runs `f` against a consistent view.
    pub fn read<T>(&self, f: impl FnOnce(&StoreState) -> T) -> T {
        f(&self.state.read())
    }

    /// Number of committed transactions since this handle was opened.
    pub fn revision(&self) -> u64 {
        self.revision.load(Ordering::Acquire)
    }

    pub fn snapshot_state(&self) -> StoreState {
        self.state.read().clone()
    }

    /// Validates against the current state and commits the returned events
    /// atomically with respect to other writers.
    pub fn transact<T, E>(
        &self,
        f: impl FnOnce(&StoreState) -> Result<(Vec<Event>, T), E>,
    ) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let mut state = self.state.write();
        let (events, out) = f(&state)?;
        if events.is_empty() {
            return Ok(out);
        }
        self.append(&events)?;
        for e in events {
            state.apply(e);
        }
        self.revision.fetch_add(1, Ordering::Release);
        Ok(out)
    }

    fn append(&self, events: &[Event]) -> Result<(), StoreError> {
        let mut log = self.log.lock();
        let Some(writer) = log.as_mut() else {
            return Ok(());
        };
        let path = self.path.clone().unwrap_or_default();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        for e in events {
            let line = serde_json::to_string(e).expect("store events always serialize");
            writer.write_all(line.as_bytes()).map_err(io)?;
            writer.write_all(b"\n").map_err(io)?;
        }
        writer.flush().map_err(io)
    }
}
