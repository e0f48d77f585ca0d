use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration as StdDuration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use counterspeech_cli::server::{router, AppState};
use counterspeech_core::responder::RetrievalScore;
use counterspeech_core::review::ReplyPoster;
use counterspeech_core::{
    CandidateReply, ManualClock, PostId, PostRecord, ReplyId, ReviewDesk, ReviewError, Store, Timestamp,
};

const TOKEN: &str = "s3cret";
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

fn reply(target: &str) -> CandidateReply {
    CandidateReply {
        reply_id: ReplyId::new(format!("reply-{target}")),
        target_post_id: PostId::new(target),
        text: format!("Sprawdź: {URL}"),
        cited_urls: vec![URL.into()],
        retrieval_scores: vec![RetrievalScore {
            article_id: "a".into(),
            similarity: 0.4,
        }],
        generation_cost_usd: 0.048,
        created_at: t0(),
    }
}

#[derive(Default)]
struct CountingPoster(AtomicUsize);

impl ReplyPoster for CountingPoster {
    fn post_reply(&self, _in_reply_to: &PostId, _text: &str) -> Result<PostId, ReviewError> {
        Ok(PostId::new(format!("bot-{}", self.0.fetch_add(1, Ordering::SeqCst))))
    }
}

struct Harness {
    store: Arc<Store>,
    clock: ManualClock,
    poster: Arc<CountingPoster>,
    app: Router,
}

impl Harness {
    fn new() -> Self {
        let store = Arc::new(Store::in_memory());
        let clock = ManualClock::new(t0());
        let poster = Arc::new(CountingPoster::default());
        let app = router(Arc::new(AppState {
            store: store.clone(),
            known_urls: vec![URL.into()],
            token: TOKEN.into(),
            clock: Arc::new(clock.clone()),
            poster: Some(poster.clone()),
            poll_interval: StdDuration::from_millis(5),
        }));
        Self {
            store,
            clock,
            poster,
            app,
        }
    }

    fn desk(&self) -> ReviewDesk<'_> {
        ReviewDesk::new(&self.store, vec![URL.into()])
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let builder = Request::builder()
            .method(method)
            .uri(uri)
            .header("authorization", format!("Bearer {TOKEN}"))
            .header("content-type", "application/json");
        let req = builder
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }
}

#[tokio::test]
async fn requests_without_the_token_are_refused() {
    let h = Harness::new();
    for auth in [None, Some("Bearer nope"), Some(TOKEN)] {
        let mut req = Request::builder().uri("/queue");
        if let Some(a) = auth {
            req = req.header("authorization", a);
        }
        let resp = h.app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
        assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    }
}

#[tokio::test]
async fn queue_lists_items_with_time_remaining() {
    let h = Harness::new();
    h.desk().enqueue(reply("p1"), post("p1"), t0()).unwrap();
    h.desk().enqueue_control_check(post("p2"), t0() + Duration::minutes(5)).unwrap();
    h.clock.set(t0() + Duration::minutes(10));

    let (status, body) = h.call("GET", "/queue?state=pending", None).await;
    assert_eq!(status, StatusCode::OK);
    let items = body.as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0]["item_id"], "reply-p1");
    assert_eq!(items[0]["kind"], "intervention");
    assert_eq!(items[0]["reply"]["text"], format!("Sprawdź: {URL}"));
    assert_eq!(items[0]["seconds_remaining"], 35 * 60);
    assert_eq!(items[1]["item_id"], "check-p2");
    assert_eq!(items[1]["seconds_remaining"], 40 * 60);

    let (status, body) = h.call("GET", "/queue?state=approved", None).await;
    assert_eq!((status, body), (StatusCode::OK, json!([])));
    let (status, _) = h.call("GET", "/queue?state=bogus", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = h.call("GET", "/items/check-p2", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["target"]["post_id"], "p2");
    let (status, _) = h.call("GET", "/items/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn decisions_map_to_status_codes() {
    let h = Harness::new();
    h.desk().enqueue(reply("p1"), post("p1"), t0()).unwrap();
    h.desk().enqueue(reply("p2"), post("p2"), t0()).unwrap();
    h.desk().enqueue_control_check(post("p3"), t0()).unwrap();
    h.clock.set(t0() + Duration::minutes(3));

    let approve = json!({"reviewer": "ola", "decision": "approve"});
    let (status, body) = h.call("POST", "/items/reply-p1/decision", Some(approve.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "approved");
    assert_eq!(body["decision"]["reviewer"], "ola");
    assert_eq!(h.poster.0.load(Ordering::SeqCst), 1);
    assert_eq!(h.store.snapshot_state().postings.len(), 1);

    let (status, _) = h.call("POST", "/items/reply-p1/decision", Some(approve.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(h.poster.0.load(Ordering::SeqCst), 1);

    let off_topic = json!({"reviewer": "ola", "decision": "reject", "code": "off_topic"});
    let (status, _) = h.call("POST", "/items/check-p3/decision", Some(off_topic)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = h.call("POST", "/items/check-p3/decision", Some(json!({"reviewer": " ", "decision": "approve"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = h.call("POST", "/items/nope/decision", Some(approve.clone())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    h.clock.set(t0() + Duration::minutes(46));
    let (status, _) = h.call("POST", "/items/reply-p2/decision", Some(approve)).await;
    assert_eq!(status, StatusCode::GONE);
    let (_, body) = h.call("GET", "/items/reply-p2", None).await;
    assert_eq!(body["state"], "expired");
    assert_eq!(h.poster.0.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn rejection_stats_cover_every_code() {
    let h = Harness::new();
    h.desk().enqueue(reply("p1"), post("p1"), t0()).unwrap();
    let reject = json!({"reviewer": "ola", "decision": "reject", "code": "hallucination"});
    let (status, _) = h.call("POST", "/items/reply-p1/decision", Some(reject)).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = h.call("GET", "/stats/rejections", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        json!({
            "not_harmful_false_positive": 0,
            "low_quality": 0,
            "off_topic": 0,
            "hallucination": 1,
            "article_mismatch": 0,
            "controversial": 0
        })
    );
}

async fn next_event(body: &mut Body) -> String {
    let mut text = String::new();
    loop {
        let frame = tokio::time::timeout(StdDuration::from_secs(5), body.frame())
            .await
            .expect("event within five seconds")
            .unwrap()
            .unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
        if text.ends_with("\n\n") {
            return text;
        }
    }
}

#[tokio::test]
async fn event_stream_reports_queue_changes() {
    let h = Harness::new();
    let req = Request::builder()
        .uri("/queue/events")
        .header("authorization", format!("Bearer {TOKEN}"))
        .body(Body::empty())
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let mut body = resp.into_body();

    h.desk().enqueue(reply("p1"), post("p1"), t0()).unwrap();
    let ev = next_event(&mut body).await;
    assert!(ev.starts_with("event: enqueued\n"), "{ev}");
    let data: Value = serde_json::from_str(ev.lines().nth(1).unwrap().strip_prefix("data: ").unwrap()).unwrap();
    assert_eq!(data, json!({"item_id": "reply-p1", "kind": "intervention", "state": "pending"}));

    h.desk().expire_overdue(t0() + Duration::hours(1)).unwrap();
    let ev = next_event(&mut body).await;
    assert!(ev.starts_with("event: expired\n"), "{ev}");
    assert!(ev.contains(r#""state":"expired""#));
}
