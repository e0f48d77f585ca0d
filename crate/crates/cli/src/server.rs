//! HTTP JSON API and event stream for the review interface.
//!
//! Routes:
//! - `GET /queue?state=pending` lists items, earliest deadline first
//! - `GET /items/{id}` returns one item
//! - `POST /items/{id}/decision` approves or rejects
//! - `GET /stats/rejections` counts rejections per code
//! - `GET /queue/events` streams queue changes as server-sent events
//!
//! Every route requires `Authorization: Bearer <token>`.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};

use counterspeech_core::review::{Decision, ReplyPoster, ReviewKind};
use counterspeech_core::{
    Clock, RejectionCode, ReplyId, ReviewDesk, ReviewError, ReviewItem, ReviewState, ReviewerId, Store,
};

pub const TOKEN_ENV: &str = "REVIEW_API_TOKEN";

pub struct AppState {
    pub store: Arc<Store>,
    pub known_urls: Vec<String>,
    pub token: String,
    pub clock: Arc<dyn Clock>,
    /// Posts approved interventions right away when present.
    pub poster: Option<Arc<dyn ReplyPoster>>,
    pub poll_interval: StdDuration,
}

impl AppState {
    fn desk(&self) -> ReviewDesk<'_> {
        ReviewDesk::new(&self.store, self.known_urls.clone())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueueEntry {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub seconds_remaining: i64,
}

#[derive(Debug, Deserialize)]
pub struct DecisionRequest {
    pub reviewer: String,
    #[serde(flatten)]
    pub decision: Decision,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct QueueChange {
    pub item_id: ReplyId,
    pub kind: ReviewKind,
    pub state: ReviewState,
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    state: Option<String>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::AlreadyDecided { .. } | ReviewError::Duplicate(_) | ReviewError::InvalidState { .. } => {
                StatusCode::CONFLICT
            }
            ReviewError::Expired { .. } => StatusCode::GONE,
            ReviewError::InvalidDecision(_) | ReviewError::Invariant(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::TransientPost(_) => StatusCode::BAD_GATEWAY,
            ReviewError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/queue", get(list_queue))
        .route("/queue/events", get(queue_events))
        .route("/items/{id}", get(get_item))
        .route("/items/{id}/decision", post(decide))
        .route("/stats/rejections", get(rejection_stats))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(state.token.as_str()) {
        next.run(req).await
    } else {
        ApiError(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response()
    }
}

fn entry(item: ReviewItem, state: &AppState) -> QueueEntry {
    let seconds_remaining = item.seconds_remaining(state.clock.now());
    QueueEntry { item, seconds_remaining }
}

async fn list_queue(
    State(state): State<Arc<AppState>>,
    Query(q): Query<QueueQuery>,
) -> Result<Json<Vec<QueueEntry>>, ApiError> {
    let filter = q
        .state
        .as_deref()
        .map(str::parse::<ReviewState>)
        .transpose()
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?;
    let items = state.desk().list(filter);
    Ok(Json(items.into_iter().map(|i| entry(i, &state)).collect()))
}

async fn get_item(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<QueueEntry>, ApiError> {
    let item = state
        .desk()
        .get(&ReplyId::new(id.clone()))
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("review item {id} not found")))?;
    Ok(Json(entry(item, &state)))
}

async fn decide(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<DecisionRequest>,
) -> Result<Json<QueueEntry>, ApiError> {
    if body.reviewer.trim().is_empty() {
        return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "reviewer is required".into()));
    }
    let item_id = ReplyId::new(id);
    let st = state.clone();
    let decided = tokio::task::spawn_blocking(move || -> Result<ReviewItem, ReviewError> {
        let now = st.clock.now();
        let desk = st.desk();
        let decided = desk.decide(&item_id, body.decision, ReviewerId::new(body.reviewer), now)?;
        if decided.state == ReviewState::Approved && decided.kind == ReviewKind::Intervention {
            if let Some(poster) = &st.poster {
                if let Err(e) = desk.post_approved(&item_id, poster.as_ref(), st.clock.now()) {
                    tracing::warn!(item = %item_id, error = %e, "posting failed; the live loop will retry");
                }
            }
        }
        Ok(decided)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(entry(decided, &state)))
}

async fn rejection_stats(State(state): State<Arc<AppState>>) -> Json<BTreeMap<RejectionCode, usize>> {
    Json(state.desk().rejection_histogram())
}

fn queue_view(store: &Store) -> BTreeMap<ReplyId, (ReviewKind, ReviewState)> {
    store.read(|s| s.reviews.values().map(|i| (i.item_id.clone(), (i.kind, i.state))).collect())
}

/// Items that are new or whose state moved between two views.
pub fn diff_queue(
    before: &BTreeMap<ReplyId, (ReviewKind, ReviewState)>,
    after: &BTreeMap<ReplyId, (ReviewKind, ReviewState)>,
) -> Vec<QueueChange> {
    after
        .iter()
        .filter(|(id, now)| before.get(*id) != Some(*now))
        .map(|(id, (kind, state))| QueueChange {
            item_id: id.clone(),
            kind: *kind,
            state: *state,
        })
        .collect()
}

async fn queue_events(State(state): State<Arc<AppState>>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    struct Cursor {
        state: Arc<AppState>,
        revision: u64,
        view: BTreeMap<ReplyId, (ReviewKind, ReviewState)>,
        pending: std::collections::VecDeque<QueueChange>,
    }
    let cursor = Cursor {
        revision: state.store.revision(),
        view: queue_view(&state.store),
        pending: Default::default(),
        state,
    };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(change) = c.pending.pop_front() {
                let name = match change.state {
                    ReviewState::Pending => "enqueued",
                    ReviewState::Expired => "expired",
                    _ => "decided",
                };
                let ev = SseEvent::default()
                    .event(name)
                    .json_data(&change)
                    .expect("queue change serializes");
                return Some((Ok(ev), c));
            }
            tokio::time::sleep(c.state.poll_interval).await;
            let rev = c.state.store.revision();
            if rev != c.revision {
                c.revision = rev;
                let view = queue_view(&c.state.store);
                c.pending.extend(diff_queue(&c.view, &view));
                c.view = view;
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review API listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
