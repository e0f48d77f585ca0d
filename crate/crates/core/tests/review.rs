use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Barrier;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use counterspeech_core::responder::RetrievalScore;
use counterspeech_core::review::{audit_postings, Decision, RejectionReason, ReplyPoster, ReviewKind, REVIEW_WINDOW};
use counterspeech_core::{
    CandidateReply, PostId, PostRecord, RejectionCode, ReplyId, ReviewDesk, ReviewError, ReviewState, ReviewerId,
    Store, Timestamp,
};

const URL: &str = "https://demagog.org.pl/fakty";

fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2023, 8, 24, 8, 0, 0).unwrap()
}

fn post(id: &str) -> PostRecord {
    PostRecord {
        post_id: PostId::new(id),
        author_id: "a".into(),
        text: format!("wpis {id}"),
        created_at: t0() - Duration::hours(1),
        is_reply: false,
        parent_id: None,
        language_tag: "pl".into(),
    }
}

fn reply(target: &str, text: &str) -> CandidateReply {
    CandidateReply {
        reply_id: ReplyId::new(format!("reply-{target}")),
        target_post_id: PostId::new(target),
        text: text.into(),
        cited_urls: if text.contains(URL) { vec![URL.into()] } else { vec![] },
        retrieval_scores: vec![RetrievalScore {
            article_id: "a".into(),
            similarity: 0.5,
        }],
        generation_cost_usd: 0.048,
        created_at: t0(),
    }
}

fn desk(store: &Store) -> ReviewDesk<'_> {
    ReviewDesk::new(store, vec![URL.into()])
}

#[derive(Default)]
struct CountingPoster {
    calls: AtomicUsize,
}

impl ReplyPoster for CountingPoster {
    fn post_reply(&self, _in_reply_to: &PostId, _text: &str) -> Result<PostId, ReviewError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(PostId::new(format!("posted-{n}")))
    }
}

fn approve() -> Decision {
    Decision::Approve
}

fn reject(code: RejectionCode) -> Decision {
    Decision::Reject(RejectionReason::new(code))
}

#[test]
fn concurrent_reviewers_first_writer_wins() {
    let store = Store::in_memory();
    let d = desk(&store);
    let item = d.enqueue(reply("p1", "Sprawdź: https://demagog.org.pl/fakty"), post("p1"), t0()).unwrap();
    let barrier = Barrier::new(8);
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let (d, barrier, id) = (&d, &barrier, item.item_id.clone());
                s.spawn(move || {
                    barrier.wait();
                    let decision = if i % 2 == 0 { approve() } else { reject(RejectionCode::LowQuality) };
                    (i, d.decide(&id, decision, ReviewerId::new(format!("r{i}")), t0() + Duration::minutes(5)))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let winners: Vec<_> = results.iter().filter(|(_, r)| r.is_ok()).collect();
    assert_eq!(winners.len(), 1);
    for (_, r) in results.iter().filter(|(_, r)| r.is_err()) {
        assert!(matches!(r, Err(ReviewError::AlreadyDecided { .. })));
    }
    let (i, won) = winners[0];
    let stored = d.get(&item.item_id).unwrap();
    assert_eq!(&stored, won.as_ref().unwrap());
    assert_eq!(stored.decision.unwrap().reviewer, ReviewerId::new(format!("r{i}")));
}

#[test]
fn approved_reply_is_posted_exactly_once() {
    let store = Store::in_memory();
    let d = desk(&store);
    let poster = CountingPoster::default();
    let item = d.enqueue(reply("p1", "Nie do końca: https://demagog.org.pl/fakty"), post("p1"), t0()).unwrap();
    let err = d.post_approved(&item.item_id, &poster, t0()).unwrap_err();
    assert!(matches!(err, ReviewError::InvalidState { state: ReviewState::Pending, .. }));

    d.decide(&item.item_id, approve(), ReviewerId::new("r"), t0() + Duration::minutes(1)).unwrap();
    let at = t0() + Duration::minutes(2);
    let first = d.post_approved(&item.item_id, &poster, at).unwrap();
    let second = d.post_approved(&item.item_id, &poster, at + Duration::minutes(1)).unwrap();
    assert!(!first.already_posted && second.already_posted);
    assert_eq!(first.posted_id, second.posted_id);
    assert_eq!(first.snapshot_due_at, at + Duration::minutes(15));
    assert_eq!(poster.calls.load(Ordering::SeqCst), 1);

    let state = store.snapshot_state();
    assert!(audit_postings(&state).is_empty());
    let task = state.tasks.values().next().unwrap();
    assert_eq!(task.post_ids, vec![PostId::new("p1"), first.posted_id.clone()]);
}

#[test]
fn rejected_expired_and_control_items_are_never_posted() {
    let store = Store::in_memory();
    let d = desk(&store);
    let poster = CountingPoster::default();
    let rejected = d.enqueue(reply("p1", "Odpowiedź pierwsza"), post("p1"), t0()).unwrap();
    let expired = d.enqueue(reply("p2", "Odpowiedź druga"), post("p2"), t0()).unwrap();
    let check = d.enqueue_control_check(post("p3"), t0()).unwrap();
    assert_eq!(check.kind, ReviewKind::ControlCheck);

    d.decide(&rejected.item_id, reject(RejectionCode::Hallucination), ReviewerId::new("r"), t0()).unwrap();
    d.decide(&check.item_id, approve(), ReviewerId::new("r"), t0()).unwrap();
    assert_eq!(d.expire_overdue(t0() + REVIEW_WINDOW + Duration::seconds(1)).unwrap(), 1);
    for id in [&rejected.item_id, &expired.item_id, &check.item_id] {
        assert!(matches!(d.post_approved(id, &poster, t0()), Err(ReviewError::InvalidState { .. })));
    }
    assert_eq!(poster.calls.load(Ordering::SeqCst), 0);
    assert_eq!(d.get(&expired.item_id).unwrap().state, ReviewState::Expired);
}

#[test]
fn control_checks_accept_only_the_false_positive_reason() {
    let store = Store::in_memory();
    let d = desk(&store);
    let check = d.enqueue_control_check(post("p1"), t0()).unwrap();
    let err = d.decide(&check.item_id, reject(RejectionCode::OffTopic), ReviewerId::new("r"), t0()).unwrap_err();
    assert!(matches!(err, ReviewError::InvalidDecision(_)));
    assert_eq!(d.get(&check.item_id).unwrap().state, ReviewState::Pending);
    let done = d
        .decide(&check.item_id, reject(RejectionCode::NotHarmfulFalsePositive), ReviewerId::new("r"), t0())
        .unwrap();
    assert_eq!(done.state, ReviewState::Rejected);
}

#[test]
fn invalid_replies_cannot_be_enqueued() {
    let store = Store::in_memory();
    let d = desk(&store);
    let long = "a".repeat(201);
    assert!(matches!(d.enqueue(reply("p1", &long), post("p1"), t0()), Err(ReviewError::Invariant(_))));
    let mut foreign = reply("p1", "zob. https://example.com/x");
    foreign.cited_urls = vec!["https://example.com/x".into()];
    assert!(matches!(d.enqueue(foreign, post("p1"), t0()), Err(ReviewError::Invariant(_))));
    assert!(matches!(d.enqueue(reply("p1", "ok"), post("other"), t0()), Err(ReviewError::Invariant(_))));
    d.enqueue(reply("p1", "ok"), post("p1"), t0()).unwrap();
    assert!(matches!(d.enqueue(reply("p1", "ok"), post("p1"), t0()), Err(ReviewError::Duplicate(_))));
}

#[test]
fn histogram_lists_all_six_codes() {
    let store = Store::in_memory();
    let d = desk(&store);
    for (i, code) in [RejectionCode::LowQuality, RejectionCode::LowQuality, RejectionCode::Controversial]
        .into_iter()
        .enumerate()
    {
        let id = format!("p{i}");
        let item = d.enqueue(reply(&id, "tekst"), post(&id), t0()).unwrap();
        d.decide(&item.item_id, reject(code), ReviewerId::new("r"), t0()).unwrap();
    }
    let h = d.rejection_histogram();
    assert_eq!(h.len(), 6);
    assert_eq!(h[&RejectionCode::LowQuality], 2);
    assert_eq!(h[&RejectionCode::Controversial], 1);
    assert_eq!(h[&RejectionCode::Hallucination], 0);
}

#[test]
fn queue_survives_reopening_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let before = {
        let store = Store::open(&path).unwrap();
        let d = desk(&store);
        let a = d.enqueue(reply("p1", "tekst"), post("p1"), t0()).unwrap();
        d.enqueue(reply("p2", "tekst"), post("p2"), t0()).unwrap();
        d.decide(&a.item_id, approve(), ReviewerId::new("r"), t0()).unwrap();
        store.snapshot_state()
    };
    let reopened = Store::open(&path).unwrap();
    assert_eq!(reopened.snapshot_state(), before);
    assert_eq!(desk(&reopened).list(Some(ReviewState::Pending)).len(), 1);
}

#[derive(Debug, Clone)]
enum Op {
    Decide { item: usize, approve: bool, minutes: i64 },
    Expire { minutes: i64 },
    Post { item: usize, minutes: i64 },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..4, any::<bool>(), 0i64..120).prop_map(|(item, approve, minutes)| Op::Decide { item, approve, minutes }),
        (0i64..120).prop_map(|minutes| Op::Expire { minutes }),
        (0usize..4, 0i64..120).prop_map(|(item, minutes)| Op::Post { item, minutes }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lifecycle_never_leaves_a_terminal_state(ops in prop::collection::vec(op(), 1..30)) {
        let store = Store::in_memory();
        let d = desk(&store);
        let poster = CountingPoster::default();
        let ids: Vec<ReplyId> = (0..4)
            .map(|i| {
                let p = format!("p{i}");
                d.enqueue(reply(&p, "tekst odpowiedzi"), post(&p), t0()).unwrap().item_id
            })
            .collect();
        let mut seen_terminal: Vec<Option<ReviewState>> = vec![None; 4];
        for op in ops {
            match op {
                Op::Decide { item, approve: yes, minutes } => {
                    let at = t0() + Duration::minutes(minutes);
                    let decision = if yes { approve() } else { reject(RejectionCode::OffTopic) };
                    let res = d.decide(&ids[item], decision, ReviewerId::new("r"), at);
                    match seen_terminal[item] {
                        Some(_) => {
                            let already = matches!(res, Err(ReviewError::AlreadyDecided { .. }));
                            prop_assert!(already);
                        }
                        None if minutes > 45 => {
                            let expired = matches!(res, Err(ReviewError::Expired { .. }));
                            prop_assert!(expired);
                        }
                        None => prop_assert!(res.is_ok()),
                    }
                }
                Op::Expire { minutes } => {
                    d.expire_overdue(t0() + Duration::minutes(minutes)).unwrap();
                }
                Op::Post { item, minutes } => {
                    let at = t0() + Duration::minutes(minutes);
                    let current = d.get(&ids[item]).unwrap();
                    let already = store.read(|s| s.postings.contains_key(&ids[item]));
                    let approved_by = current.decision.as_ref().map(|x| x.decided_at);
                    let res = d.post_approved(&ids[item], &poster, at);
                    let postable = current.state == ReviewState::Approved && approved_by.is_some_and(|t| t <= at);
                    prop_assert_eq!(res.is_ok(), already || postable);
                }
            }
            for (i, id) in ids.iter().enumerate() {
                let now = d.get(id).unwrap().state;
                if let Some(prev) = seen_terminal[i] {
                    prop_assert_eq!(prev, now);
                } else if now.is_terminal() {
                    seen_terminal[i] = Some(now);
                }
            }
        }
        let state = store.snapshot_state();
        prop_assert!(audit_postings(&state).is_empty());
        let approved = seen_terminal.iter().filter(|s| **s == Some(ReviewState::Approved)).count();
        prop_assert!(poster.calls.load(Ordering::SeqCst) <= approved);
        prop_assert_eq!(poster.calls.load(Ordering::SeqCst), state.postings.len());
    }
}
