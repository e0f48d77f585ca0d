use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Mutex;

use chrono::{Duration, TimeZone};
use chrono_tz::Europe::Warsaw;

use counterspeech_core::classifier::{embed, predict, HashedBagOfWords, LabeledText};
use counterspeech_core::experiment::{
    audit_randomization, ArmAssigner, ExperimentStatus, MetricsSource, Pipeline, SnapshotKind,
};
use counterspeech_core::fixtures::{default_fewshot, reference_articles, train_reference_model, training_texts};
use counterspeech_core::ingest::{IngestError, PostSource};
use counterspeech_core::responder::TemplateClient;
use counterspeech_core::review::ReviewKind;
use counterspeech_core::{
    Arm, Experiment, ExperimentError, HateModel, MetricsSnapshot, PostId, PostRecord, Responder, ReviewState,
    ScheduleConfig, Store, Timestamp,
};

const SEED: u64 = 31;

fn local(d: u32, h: u32, m: u32) -> Timestamp {
    Warsaw.with_ymd_and_hms(2023, 8, d, h, m, 0).unwrap().to_utc()
}

struct Fixture {
    texts: Vec<LabeledText>,
    model: HateModel,
    embedder: HashedBagOfWords,
    responder: Responder,
    generator: TemplateClient,
}

impl Fixture {
    fn new() -> Self {
        let texts = training_texts(5);
        let model = train_reference_model(&texts).unwrap();
        let embedder = HashedBagOfWords::default();
        let mut articles = reference_articles();
        articles.embed_missing(&embedder).unwrap();
        Self {
            texts,
            model,
            embedder,
            responder: Responder::new(articles, Some(default_fewshot())),
            generator: TemplateClient::new(),
        }
    }

    fn experiment<'a>(&'a self, store: &'a Store, seed: u64) -> Result<Experiment<'a>, ExperimentError> {
        let pipeline = Pipeline {
            model: &self.model,
            embedder: &self.embedder,
            responder: &self.responder,
            generator: &self.generator,
        };
        Experiment::new(store, ScheduleConfig::default(), "q", seed, pipeline)
    }

    /// Every text as a fresh original post, plus two that are too old.
    fn posts(&self, now: Timestamp) -> Vec<PostRecord> {
        let mut out: Vec<PostRecord> = self
            .texts
            .iter()
            .enumerate()
            .map(|(i, t)| PostRecord {
                post_id: PostId::new(format!("p{i:03}")),
                author_id: format!("u{}", i % 7).into(),
                text: t.text.clone(),
                created_at: now - Duration::minutes(1 + i as i64),
                is_reply: false,
                parent_id: None,
                language_tag: "pl".into(),
            })
            .collect();
        for i in 0..2 {
            out.push(PostRecord {
                post_id: PostId::new(format!("old{i}")),
                created_at: now - Duration::hours(5),
                ..out[i].clone()
            });
        }
        out
    }

    fn harmful_ids(&self, posts: &[PostRecord]) -> Vec<PostId> {
        posts
            .iter()
            .filter(|p| !p.post_id.as_str().starts_with("old"))
            .filter(|p| predict(&self.model, &embed(&p.text, &self.embedder).unwrap()).unwrap().is_harmful)
            .map(|p| p.post_id.clone())
            .collect()
    }
}

struct FixedSource(Vec<PostRecord>);

impl PostSource for FixedSource {
    fn search(&mut self, _query: &str, now: Timestamp) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError> {
        Ok(self
            .0
            .iter()
            .map(|p| {
                let m = MetricsSnapshot {
                    post_id: p.post_id.clone(),
                    taken_at: now,
                    likes: 1,
                    impressions: 50,
                    replies: 0,
                };
                (p.clone(), m)
            })
            .collect())
    }
}

#[test]
fn window_assigns_every_harmful_post_in_seeded_order() {
    let fx = Fixture::new();
    let store = Store::in_memory();
    let exp = fx.experiment(&store, SEED).unwrap();
    let now = local(24, 10, 5);
    let posts = fx.posts(now);
    let summary = exp.run_window(&mut FixedSource(posts.clone()), now).unwrap();

    let harmful = fx.harmful_ids(&posts);
    assert!(harmful.len() > 10 && harmful.len() < posts.len() - 2);
    assert_eq!(summary.window_start, local(24, 10, 0));
    assert_eq!(summary.fetched, posts.len() - 2);
    assert_eq!(summary.classified_harmful, harmful.len());
    assert!(summary.is_conserved());

    let mut oracle = ArmAssigner::new(SEED);
    let state = store.snapshot_state();
    for (i, id) in harmful.iter().enumerate() {
        let a = &state.assignments[id];
        assert_eq!(a.draw, i as u64);
        assert_eq!(a.arm, oracle.draw(), "{id}");
    }
    assert_eq!(state.assignments.len(), harmful.len());
    assert!(audit_randomization(&state).is_ok());

    let desk = exp.desk();
    let pending = desk.list(Some(ReviewState::Pending));
    let checks = pending.iter().filter(|i| i.kind == ReviewKind::ControlCheck).count();
    assert_eq!(checks, summary.assigned_ctrl);
    assert_eq!(pending.len() - checks, summary.enqueued);
    for item in pending.iter().filter(|i| i.kind == ReviewKind::Intervention) {
        assert_eq!(state.assignments[&item.target.post_id].arm, Arm::Experimental);
        assert_eq!(item.deadline, now + Duration::minutes(45));
    }
}

#[test]
fn rerunning_a_window_adds_no_assignments() {
    let fx = Fixture::new();
    let store = Store::in_memory();
    let exp = fx.experiment(&store, SEED).unwrap();
    let posts = fx.posts(local(24, 14, 0));
    let first = exp.run_window(&mut FixedSource(posts.clone()), local(24, 14, 0)).unwrap();
    let before = store.snapshot_state().assignments;
    let second = exp.run_window(&mut FixedSource(posts), local(24, 14, 10)).unwrap();
    assert_eq!(second.fetched, 0);
    assert_eq!(second.already_seen, first.fetched);
    assert_eq!(second.classified_harmful, 0);
    assert!(second.is_conserved());
    assert_eq!(store.snapshot_state().assignments, before);
}

#[test]
fn runs_outside_the_schedule_are_refused() {
    let fx = Fixture::new();
    let store = Store::in_memory();
    let exp = fx.experiment(&store, SEED).unwrap();
    for at in [local(24, 2, 0), local(24, 11, 0), local(24, 9, 59)] {
        let err = exp.run_window(&mut FixedSource(fx.posts(at)), at).unwrap_err();
        assert!(matches!(err, ExperimentError::Schedule(_)), "{at}: {err:?}");
    }
    assert_eq!(store.revision(), 0);
}

#[test]
fn a_store_refuses_a_different_seed() {
    let fx = Fixture::new();
    let store = Store::in_memory();
    let now = local(24, 18, 0);
    fx.experiment(&store, SEED).unwrap().run_window(&mut FixedSource(fx.posts(now)), now).unwrap();
    assert!(matches!(fx.experiment(&store, SEED + 1), Err(ExperimentError::Config(_))));
    assert!(fx.experiment(&store, SEED).is_ok());
}

#[test]
fn reopened_store_resumes_the_assignment_sequence() {
    let fx = Fixture::new();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let all = fx.posts(local(25, 10, 0));
    let (first, second) = all.split_at(all.len() / 2);

    let continuous = Store::in_memory();
    let exp = fx.experiment(&continuous, SEED).unwrap();
    exp.run_window(&mut FixedSource(first.to_vec()), local(25, 10, 0)).unwrap();
    exp.run_window(&mut FixedSource(second.to_vec()), local(25, 10, 20)).unwrap();

    {
        let store = Store::open(&path).unwrap();
        let exp = fx.experiment(&store, SEED).unwrap();
        exp.run_window(&mut FixedSource(first.to_vec()), local(25, 10, 0)).unwrap();
    }
    let store = Store::open(&path).unwrap();
    let exp = fx.experiment(&store, SEED).unwrap();
    exp.run_window(&mut FixedSource(second.to_vec()), local(25, 10, 20)).unwrap();
    assert_eq!(store.snapshot_state(), continuous.snapshot_state());
    assert_eq!(Store::open(&path).unwrap().snapshot_state(), continuous.snapshot_state());
}

/// Blocks inside `search` until released, so a second run can collide.
struct GatedSource {
    entered: mpsc::Sender<()>,
    release: Mutex<mpsc::Receiver<()>>,
}

impl PostSource for GatedSource {
    fn search(&mut self, _query: &str, _now: Timestamp) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError> {
        self.entered.send(()).unwrap();
        self.release.lock().unwrap().recv().unwrap();
        Ok(Vec::new())
    }
}

#[test]
fn overlapping_window_runs_are_refused() {
    let fx = Fixture::new();
    let store = Store::in_memory();
    let exp = fx.experiment(&store, SEED).unwrap();
    let now = local(24, 22, 0);
    let (entered_tx, entered_rx) = mpsc::channel();
    let (release_tx, release_rx) = mpsc::channel();
    std::thread::scope(|s| {
        let exp = &exp;
        let running = s.spawn(move || {
            let mut src = GatedSource {
                entered: entered_tx,
                release: Mutex::new(release_rx),
            };
            exp.run_window(&mut src, now)
        });
        entered_rx.recv().unwrap();
        let err = exp.run_window(&mut FixedSource(Vec::new()), now).unwrap_err();
        assert!(matches!(err, ExperimentError::WindowBusy));
        release_tx.send(()).unwrap();
        assert!(running.join().unwrap().is_ok());
    });
    assert!(exp.run_window(&mut FixedSource(Vec::new()), now).is_ok());
}

#[derive(Default)]
struct Counters(BTreeMap<PostId, u64>);

impl MetricsSource for Counters {
    fn lookup(&self, post_id: &PostId, now: Timestamp) -> Result<Option<MetricsSnapshot>, ExperimentError> {
        Ok(self.0.get(post_id).map(|likes| MetricsSnapshot {
            post_id: post_id.clone(),
            taken_at: now,
            likes: *likes,
            impressions: likes * 100,
            replies: 1,
        }))
    }
}

#[test]
fn control_posts_are_snapshotted_and_finalized_on_schedule() {
    let fx = Fixture::new();
    let store = Store::in_memory();
    let exp = fx.experiment(&store, SEED).unwrap();
    let now = local(24, 10, 0);
    let summary = exp.run_window(&mut FixedSource(fx.posts(now)), now).unwrap();
    let state = store.snapshot_state();
    let controls: Vec<PostId> = state
        .assignments
        .values()
        .filter(|a| a.arm == Arm::Control)
        .map(|a| a.post_id.clone())
        .collect();
    assert_eq!(controls.len(), summary.assigned_ctrl);
    let initial_due: Vec<Timestamp> = state
        .tasks
        .values()
        .filter(|t| t.kind == SnapshotKind::Initial)
        .map(|t| t.due_at)
        .collect();
    assert_eq!(initial_due, vec![now + Duration::minutes(15); controls.len()]);

    // The first control post disappears before its initial snapshot.
    let mut live = Counters::default();
    for (i, id) in controls.iter().enumerate().skip(1) {
        live.0.insert(id.clone(), i as u64);
    }
    let early = exp.run_due_snapshots(&live, now + Duration::minutes(14)).unwrap();
    assert_eq!((early.initial, early.deleted), (0, 0));
    let initial = exp.run_due_snapshots(&live, now + Duration::minutes(16)).unwrap();
    assert_eq!((initial.initial, initial.deleted), (controls.len() - 1, 1));

    let end = now + Duration::minutes(16) + Duration::days(6);
    let status = ExperimentStatus::from_store(&store, end);
    assert_eq!(status.deleted, 1);
    let fin = exp.run_due_snapshots(&live, end).unwrap();
    assert_eq!(fin.final_, controls.len() - 1);
    let state = store.snapshot_state();
    for (i, id) in controls.iter().enumerate().skip(1) {
        let a = &state.assignments[id];
        assert_eq!(a.initial_snapshot.as_ref().unwrap().taken_at, now + Duration::minutes(16));
        assert_eq!(a.final_snapshot.as_ref().unwrap().likes, i as u64);
    }
    assert!(state.assignments[&controls[0]].deleted);
}
