//! HTTP client for a recent-search style platform API (v2 tweet endpoints).
//!
//! Credentials come from the environment: `PLATFORM_BEARER_TOKEN` is required,
//! `PLATFORM_API_BASE` overrides the endpoint root.

use std::time::Duration as StdDuration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;
use thiserror::Error;

use super::{IngestError, MetricsSnapshot, PostRecord, PostSource};
use crate::types::{PostId, Timestamp};

pub const DEFAULT_API_BASE: &str = "https://api.twitter.com/2";
const TWEET_FIELDS: &str = "created_at,author_id,lang,referenced_tweets,public_metrics";

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("platform unavailable after {attempts} attempts: {message}")]
    Transient { attempts: u32, message: String },
    #[error("platform rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("unexpected platform response: {0}")]
    Decode(String),
    #[error("missing credentials: {0}")]
    Credentials(String),
}

impl From<PlatformError> for IngestError {
    fn from(e: PlatformError) -> Self {
        IngestError::TransientSource(e.to_string())
    }
}

/// Capped exponential backoff with "equal jitter": the n-th retry waits a
/// uniform draw from `[d/2, d]` where `d = min(max_delay, base * 2^n)`.
#[derive(Debug, Clone)]
pub struct Backoff {
    pub base: StdDuration,
    pub max_delay: StdDuration,
    pub max_retries: u32,
    pub seed: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: StdDuration::from_millis(500),
            max_delay: StdDuration::from_secs(60),
            max_retries: 5,
            seed: 0x5eed,
        }
    }
}

impl Backoff {
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> StdDuration {
        let factor = 2u32.saturating_pow(attempt.min(30));
        let cap = self.base.saturating_mul(factor).min(self.max_delay);
        let half = cap / 2;
        half + cap.saturating_sub(half).mul_f64(rng.random::<f64>())
    }

    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, Attempt>,
    ) -> Result<T, PlatformError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempt >= self.max_retries {
                        return Err(PlatformError::Transient {
                            attempts: attempt + 1,
                            message,
                        });
                    }
                    let wait = self.delay(attempt, &mut rng);
                    tracing::debug!(attempt, ?wait, %message, "retrying platform call");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}

/// Outcome of one attempt inside [`Backoff::run`].
#[derive(Debug)]
pub enum Attempt {
    Retry(String),
    Fatal(PlatformError),
}

#[derive(Debug, Clone)]
pub struct PlatformConfig {
    pub base_url: String,
    pub bearer_token: String,
    pub page_size: u32,
    pub max_pages: u32,
    pub backoff: Backoff,
}

impl PlatformConfig {
    pub fn new(base_url: impl Into<String>, bearer_token: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            bearer_token: bearer_token.into(),
            page_size: 100,
            max_pages: 10,
            backoff: Backoff::default(),
        }
    }

    pub fn from_env() -> Result<Self, PlatformError> {
        let token = std::env::var("PLATFORM_BEARER_TOKEN")
            .map_err(|_| PlatformError::Credentials("PLATFORM_BEARER_TOKEN is not set".into()))?;
        let base = std::env::var("PLATFORM_API_BASE").unwrap_or_else(|_| DEFAULT_API_BASE.into());
        Ok(Self::new(base, token))
    }
}

pub struct PlatformClient {
    http: Client,
    config: PlatformConfig,
}

#[derive(Debug, Deserialize)]
struct Page {
    #[serde(default)]
    data: Vec<ApiPost>,
    #[serde(default)]
    meta: Option<PageMeta>,
}

#[derive(Debug, Deserialize)]
struct PageMeta {
    next_token: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ApiPost {
    id: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    author_id: String,
    created_at: Option<Timestamp>,
    #[serde(default)]
    lang: String,
    #[serde(default)]
    referenced_tweets: Vec<Reference>,
    public_metrics: Option<PublicMetrics>,
}

#[derive(Debug, Deserialize)]
struct Reference {
    #[serde(rename = "type")]
    kind: String,
    id: String,
}

#[derive(Debug, Default, Deserialize)]
struct PublicMetrics {
    #[serde(default)]
    like_count: u64,
    #[serde(default)]
    reply_count: u64,
    #[serde(default)]
    impression_count: u64,
}

#[derive(Debug, Deserialize)]
struct Created {
    data: CreatedPost,
}

#[derive(Debug, Deserialize)]
struct CreatedPost {
    id: String,
}

impl ApiPost {
    fn into_record(self, now: Timestamp) -> Result<(PostRecord, MetricsSnapshot), PlatformError> {
        let created_at = self
            .created_at
            .ok_or_else(|| PlatformError::Decode(format!("post {} has no created_at", self.id)))?;
        let parent = self
            .referenced_tweets
            .iter()
            .find(|r| r.kind == "replied_to")
            .map(|r| PostId::new(r.id.clone()));
        let metrics = self.public_metrics.unwrap_or_default();
        let post_id = PostId::new(self.id);
        Ok((
            PostRecord {
                post_id: post_id.clone(),
                author_id: self.author_id.into(),
                text: self.text,
                created_at,
                is_reply: parent.is_some(),
                parent_id: parent,
                language_tag: self.lang,
            },
            MetricsSnapshot {
                post_id,
                taken_at: now,
                likes: metrics.like_count,
                impressions: metrics.impression_count,
                replies: metrics.reply_count,
            },
        ))
    }
}

pub(crate) fn classify_status(resp: Response) -> Result<Response, Attempt> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        Err(Attempt::Retry(format!("{status}: {body}")))
    } else {
        Err(Attempt::Fatal(PlatformError::Rejected {
            status: status.as_u16(),
            body,
        }))
    }
}

pub(crate) fn transport(e: reqwest::Error) -> Attempt {
    Attempt::Retry(e.to_string())
}

impl PlatformClient {
    pub fn new(config: PlatformConfig) -> Result<Self, PlatformError> {
        let http = Client::builder()
            .timeout(StdDuration::from_secs(30))
            .build()
            .map_err(|e| PlatformError::Decode(e.to_string()))?;
        Ok(Self { http, config })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn get_json<T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        params: &[(&str, String)],
    ) -> Result<T, PlatformError> {
        let resp = self.config.backoff.run(|| {
            let resp = self
                .http
                .get(self.url(path))
                .bearer_auth(&self.config.bearer_token)
                .query(params)
                .send()
                .map_err(transport)?;
            classify_status(resp)
        })?;
        resp.json::<T>().map_err(|e| PlatformError::Decode(e.to_string()))
    }

    /// Recent search, following pagination up to `max_pages`.
    pub fn search_recent(
        &self,
        query: &str,
        now: Timestamp,
    ) -> Result<Vec<(PostRecord, MetricsSnapshot)>, PlatformError> {
        let mut out = Vec::new();
        let mut next: Option<String> = None;
        for _ in 0..self.config.max_pages {
            let mut params = vec![
                ("query", query.to_owned()),
                ("max_results", self.config.page_size.to_string()),
                ("tweet.fields", TWEET_FIELDS.to_owned()),
            ];
            if let Some(token) = &next {
                params.push(("next_token", token.clone()));
            }
            let page: Page = self.get_json("/tweets/search/recent", &params)?;
            for post in page.data {
                out.push(post.into_record(now)?);
            }
            next = page.meta.and_then(|m| m.next_token);
            if next.is_none() {
                break;
            }
        }
        Ok(out)
    }

    /// Current counters for one post; `None` when the platform no longer has it.
    pub fn lookup_metrics(
        &self,
        post_id: &PostId,
        now: Timestamp,
    ) -> Result<Option<MetricsSnapshot>, PlatformError> {
        let page: Page = self.get_json(
            "/tweets",
            &[
                ("ids", post_id.to_string()),
                ("tweet.fields", TWEET_FIELDS.to_owned()),
            ],
        )?;
        let found = page.data.into_iter().find(|p| p.id == post_id.as_str());
        let Some(post) = found else {
            return Ok(None);
        };
        let metrics = post.public_metrics.unwrap_or_default();
        Ok(Some(MetricsSnapshot {
            post_id: post_id.clone(),
            taken_at: now,
            likes: metrics.like_count,
            impressions: metrics.impression_count,
            replies: metrics.reply_count,
        }))
    }

    /// Publishes `text` as a reply and returns the new post id.
    pub fn post_reply(&self, in_reply_to: &PostId, text: &str) -> Result<PostId, PlatformError> {
        let body = serde_json::json!({
            "text": text,
            "reply": { "in_reply_to_tweet_id": in_reply_to.as_str() },
        });
        let resp = self.config.backoff.run(|| {
            let resp = self
                .http
                .post(self.url("/tweets"))
                .bearer_auth(&self.config.bearer_token)
                .json(&body)
                .send()
                .map_err(transport)?;
            classify_status(resp)
        })?;
        let created: Created = resp.json().map_err(|e| PlatformError::Decode(e.to_string()))?;
        Ok(PostId::new(created.data.id))
    }
}

impl PostSource for PlatformClient {
    fn search(
        &mut self,
        query: &str,
        now: Timestamp,
    ) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError> {
        Ok(self.search_recent(query, now)?)
    }
}
