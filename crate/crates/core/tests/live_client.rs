use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration as StdDuration;

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{TimeZone, Utc};
use serde_json::{json, Value};

use counterspeech_core::ingest::{Backoff, PlatformClient, PlatformConfig, PlatformError};
use counterspeech_core::PostId;

#[derive(Default)]
struct Mock {
    search_calls: AtomicUsize,
    throttle_first: AtomicUsize,
    posted: Mutex<Vec<Value>>,
}

fn authorized(headers: &HeaderMap) -> bool {
    headers.get("authorization").and_then(|v| v.to_str().ok()) == Some("Bearer secret")
}

fn post_json(id: &str, likes: u64, replied_to: Option<&str>) -> Value {
    let mut v = json!({
        "id": id,
        "text": format!("tekst {id}"),
        "author_id": "42",
        "created_at": "2023-08-24T08:00:00Z",
        "lang": "pl",
        "public_metrics": {"like_count": likes, "reply_count": 1, "impression_count": 100 * likes}
    });
    if let Some(p) = replied_to {
        v["referenced_tweets"] = json!([{"type": "replied_to", "id": p}]);
    }
    v
}

async fn search(State(m): State<Arc<Mock>>, headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> Response {
    if !authorized(&headers) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    m.search_calls.fetch_add(1, Ordering::SeqCst);
    if m.throttle_first.load(Ordering::SeqCst) > 0 {
        m.throttle_first.fetch_sub(1, Ordering::SeqCst);
        return (StatusCode::TOO_MANY_REQUESTS, "slow down").into_response();
    }
    assert!(q.contains_key("query"));
    match q.get("next_token").map(String::as_str) {
        None => Json(json!({
            "data": [post_json("1", 3, None), post_json("2", 5, Some("1"))],
            "meta": {"next_token": "page-2"}
        }))
        .into_response(),
        Some("page-2") => Json(json!({"data": [post_json("3", 7, None)], "meta": {}})).into_response(),
        Some(other) => (StatusCode::BAD_REQUEST, format!("bad token {other}")).into_response(),
    }
}

async fn lookup(headers: HeaderMap, Query(q): Query<HashMap<String, String>>) -> Response {
    if !authorized(&headers) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    match q.get("ids").map(String::as_str) {
        Some("gone") => Json(json!({"errors": [{"detail": "not found"}]})).into_response(),
        Some(id) => Json(json!({"data": [post_json(id, 9, None)]})).into_response(),
        None => StatusCode::BAD_REQUEST.into_response(),
    }
}

async fn create(State(m): State<Arc<Mock>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    if !authorized(&headers) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    m.posted.lock().unwrap().push(body);
    (StatusCode::CREATED, Json(json!({"data": {"id": "900", "text": "ok"}}))).into_response()
}

fn start(mock: Arc<Mock>) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/tweets/search/recent", get(search))
                .route("/tweets", get(lookup).post(create))
                .with_state(mock);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn client(base: &str, token: &str) -> PlatformClient {
    let mut cfg = PlatformConfig::new(base, token);
    cfg.backoff = Backoff {
        base: StdDuration::from_millis(1),
        max_delay: StdDuration::from_millis(5),
        max_retries: 3,
        seed: 1,
    };
    PlatformClient::new(cfg).unwrap()
}

#[test]
fn search_follows_pagination_and_retries_throttling() {
    let mock = Arc::new(Mock::default());
    mock.throttle_first.store(2, Ordering::SeqCst);
    let base = start(mock.clone());
    let now = Utc.with_ymd_and_hms(2023, 8, 24, 9, 0, 0).unwrap();
    let found = client(&base, "secret").search_recent("q", now).unwrap();
    let ids: Vec<&str> = found.iter().map(|(p, _)| p.post_id.as_str()).collect();
    assert_eq!(ids, ["1", "2", "3"]);
    assert_eq!(mock.search_calls.load(Ordering::SeqCst), 4);

    let (reply, snap) = &found[1];
    assert!(reply.is_reply);
    assert_eq!(reply.parent_id, Some(PostId::new("1")));
    assert_eq!(reply.language_tag, "pl");
    assert_eq!((snap.likes, snap.impressions, snap.replies), (5, 500, 1));
    assert_eq!(snap.taken_at, now);
}

#[test]
fn persistent_throttling_gives_up() {
    let mock = Arc::new(Mock::default());
    mock.throttle_first.store(100, Ordering::SeqCst);
    let base = start(mock.clone());
    let err = client(&base, "secret").search_recent("q", Utc::now()).unwrap_err();
    assert!(matches!(err, PlatformError::Transient { attempts: 4, .. }), "{err:?}");
}

#[test]
fn auth_failures_are_not_retried() {
    let mock = Arc::new(Mock::default());
    let base = start(mock.clone());
    let err = client(&base, "wrong").search_recent("q", Utc::now()).unwrap_err();
    assert!(matches!(err, PlatformError::Rejected { status: 401, .. }), "{err:?}");
    assert_eq!(mock.search_calls.load(Ordering::SeqCst), 0);
}

#[test]
fn lookup_reports_missing_posts_as_none() {
    let base = start(Arc::new(Mock::default()));
    let c = client(&base, "secret");
    let now = Utc::now();
    let snap = c.lookup_metrics(&PostId::new("77"), now).unwrap().unwrap();
    assert_eq!((snap.likes, snap.impressions), (9, 900));
    assert!(c.lookup_metrics(&PostId::new("gone"), now).unwrap().is_none());
}

#[test]
fn post_reply_sends_threaded_reply() {
    let mock = Arc::new(Mock::default());
    let base = start(mock.clone());
    let id = client(&base, "secret").post_reply(&PostId::new("55"), "Odpowiedź").unwrap();
    assert_eq!(id, PostId::new("900"));
    let posted = mock.posted.lock().unwrap();
    assert_eq!(posted.len(), 1);
    assert_eq!(posted[0]["text"], "Odpowiedź");
    assert_eq!(posted[0]["reply"]["in_reply_to_tweet_id"], "55");
}
