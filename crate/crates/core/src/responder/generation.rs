use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use parking_lot::Mutex;
use serde::Deserialize;

use super::article::ArticleStore;
use super::cost::{estimate_cost, Pricing};
use super::prompt::{assemble_prompt, FewShotSet, PromptAssembly, DEFAULT_SYSTEM_PREAMBLE};
use super::retrieval::{rank_articles, DEFAULT_TOP_K};
use super::{extract_cited_urls, CandidateReply, ResponderError, RetrievalScore, MAX_REPLY_CHARS};
use crate::classifier::EmbeddingVector;
use crate::ingest::{Backoff, PlatformError, PostRecord};
use crate::types::{PostId, ReplyId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    /// Tokens billed for the call, when the client reports them.
    pub tokens_used: Option<u64>,
}

pub trait GenerationClient: Send + Sync {
    fn generate(&self, prompt: &PromptAssembly) -> Result<Generation, ResponderError>;
}

/// Everything about a reply that does not come from the model.
#[derive(Debug, Clone)]
pub struct ReplyContext {
    pub reply_id: ReplyId,
    pub target_post_id: PostId,
    pub retrieval_scores: Vec<RetrievalScore>,
    pub known_urls: Vec<String>,
    pub pricing: Pricing,
    pub now: Timestamp,
}

/// Calls the client, retrying once with a length reminder if the text
/// overruns the cap. Never truncates.
pub fn generate_reply(
    prompt: &PromptAssembly,
    client: &dyn GenerationClient,
    ctx: &ReplyContext,
) -> Result<CandidateReply, ResponderError> {
    let mut tokens = 0u64;
    let mut attempt_prompt = prompt.clone();
    let mut last_chars = 0;
    for attempt in 0..2 {
        let generation = client.generate(&attempt_prompt)?;
        tokens += generation
            .tokens_used
            .unwrap_or(ctx.pricing.default_tokens_per_request);
        let text = generation.text.trim().to_owned();
        last_chars = text.chars().count();
        if last_chars > MAX_REPLY_CHARS {
            tracing::debug!(attempt, chars = last_chars, "generation over length limit");
            attempt_prompt = prompt.with_length_reminder();
            continue;
        }
        if text.is_empty() {
            return Err(ResponderError::TransientGeneration("client returned empty text".into()));
        }
        let known: Vec<&str> = ctx.known_urls.iter().map(String::as_str).collect();
        let reply = CandidateReply {
            reply_id: ctx.reply_id.clone(),
            target_post_id: ctx.target_post_id.clone(),
            cited_urls: extract_cited_urls(&text, &known),
            text,
            retrieval_scores: ctx.retrieval_scores.clone(),
            generation_cost_usd: estimate_cost(tokens, ctx.pricing.price_per_million)?,
            created_at: ctx.now,
        };
        reply.validate(&known)?;
        return Ok(reply);
    }
    Err(ResponderError::LengthViolation {
        chars: last_chars,
        limit: MAX_REPLY_CHARS,
    })
}

/// Test double returning canned texts in order; the last one repeats.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    responses: Mutex<VecDeque<Result<String, String>>>,
    seen: Mutex<Vec<PromptAssembly>>,
}

impl ScriptedClient {
    pub fn always(text: impl Into<String>) -> Self {
        Self::sequence(vec![Ok(text.into())])
    }

    pub fn sequence(responses: Vec<Result<String, String>>) -> Self {
        Self {
            responses: Mutex::new(responses.into()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<PromptAssembly> {
        self.seen.lock().clone()
    }
}

impl GenerationClient for ScriptedClient {
    fn generate(&self, prompt: &PromptAssembly) -> Result<Generation, ResponderError> {
        self.seen.lock().push(prompt.clone());
        let mut q = self.responses.lock();
        let next = if q.len() > 1 { q.pop_front() } else { q.front().cloned() };
        match next {
            Some(Ok(text)) => Ok(Generation {
                text,
                tokens_used: None,
            }),
            Some(Err(e)) => Err(ResponderError::TransientGeneration(e)),
            None => Err(ResponderError::TransientGeneration("script exhausted".into())),
        }
    }
}

/// Offline generator for replays: a per-target override when one is
/// registered, otherwise a short reply pointing at the top-ranked article.
#[derive(Debug, Default, Clone)]
pub struct TemplateClient {
    overrides: BTreeMap<String, String>,
}

impl TemplateClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_override(mut self, target_text: impl Into<String>, reply: impl Into<String>) -> Self {
        self.overrides.insert(target_text.into(), reply.into());
        self
    }

    pub fn insert(&mut self, target_text: impl Into<String>, reply: impl Into<String>) {
        self.overrides.insert(target_text.into(), reply.into());
    }
}

impl GenerationClient for TemplateClient {
    fn generate(&self, prompt: &PromptAssembly) -> Result<Generation, ResponderError> {
        let text = match self.overrides.get(&prompt.target_text) {
            Some(t) => t.clone(),
            None => match prompt.articles.first() {
                Some(a) => format!("To nie tak. Fakty są inne, sprawdź sam: {}", a.url),
                None => "Pomagajmy sobie nawzajem, bez nienawiści. Ludzie uciekający przed wojną zasługują na szacunek.".to_owned(),
            },
        };
        Ok(Generation {
            text,
            tokens_used: None,
        })
    }
}

/// Replays generations recorded in a JSONL log of `{target_text, text}`.
#[derive(Debug, Clone, Default)]
pub struct ReplayLogClient {
    by_target: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct LoggedGeneration {
    target_text: String,
    text: String,
}

impl ReplayLogClient {
    pub fn load(path: &Path) -> Result<Self, ResponderError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| ResponderError::Configuration(format!("{}: {e}", path.display())))?;
        let mut by_target = BTreeMap::new();
        for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: LoggedGeneration = serde_json::from_str(line).map_err(|e| {
                ResponderError::Configuration(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            by_target.insert(entry.target_text, entry.text);
        }
        Ok(Self { by_target })
    }
}

impl GenerationClient for ReplayLogClient {
    fn generate(&self, prompt: &PromptAssembly) -> Result<Generation, ResponderError> {
        self.by_target
            .get(&prompt.target_text)
            .map(|text| Generation {
                text: text.clone(),
                tokens_used: None,
            })
            .ok_or_else(|| {
                ResponderError::TransientGeneration("no logged generation for this post".into())
            })
    }
}

/// OpenAI-compatible chat completions client. Reads `GENERATION_API_KEY`,
/// and optionally `GENERATION_API_BASE` and `GENERATION_MODEL`.
pub struct RemoteChatClient {
    http: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
    model: String,
    backoff: Backoff,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    total_tokens: u64,
}

impl RemoteChatClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            http: reqwest::blocking::Client::new(),
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            backoff: Backoff::default(),
        }
    }

    pub fn from_env() -> Result<Self, ResponderError> {
        let key = std::env::var("GENERATION_API_KEY")
            .map_err(|_| ResponderError::Configuration("GENERATION_API_KEY is not set".into()))?;
        let base = std::env::var("GENERATION_API_BASE").unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let model = std::env::var("GENERATION_MODEL").unwrap_or_else(|_| "gpt-4".into());
        Ok(Self::new(base, key, model))
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }
}

impl GenerationClient for RemoteChatClient {
    fn generate(&self, prompt: &PromptAssembly) -> Result<Generation, ResponderError> {
        use crate::ingest::{classify_status, transport};
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.model,
            "messages": prompt.messages(),
        });
        let resp = self
            .backoff
            .run(|| {
                let resp = self
                    .http
                    .post(&url)
                    .bearer_auth(&self.api_key)
                    .json(&body)
                    .send()
                    .map_err(transport)?;
                classify_status(resp)
            })
            .map_err(|e: PlatformError| ResponderError::TransientGeneration(e.to_string()))?;
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ResponderError::TransientGeneration(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ResponderError::TransientGeneration("no choices in response".into()))?;
        Ok(Generation {
            text,
            tokens_used: parsed.usage.map(|u| u.total_tokens),
        })
    }
}

/// Ties retrieval, prompt assembly and generation together for one target.
pub struct Responder {
    articles: ArticleStore,
    fewshot: Option<FewShotSet>,
    preamble: String,
    pricing: Pricing,
    top_k: usize,
    in_flight: Mutex<BTreeSet<PostId>>,
}

struct InFlight<'a> {
    set: &'a Mutex<BTreeSet<PostId>>,
    id: PostId,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set.lock().remove(&self.id);
    }
}

impl Responder {
    pub fn new(articles: ArticleStore, fewshot: Option<FewShotSet>) -> Self {
        Self {
            articles,
            fewshot,
            preamble: DEFAULT_SYSTEM_PREAMBLE.to_owned(),
            pricing: Pricing::default(),
            top_k: DEFAULT_TOP_K,
            in_flight: Mutex::new(BTreeSet::new()),
        }
    }

    pub fn with_preamble(mut self, preamble: impl Into<String>) -> Self {
        self.preamble = preamble.into();
        self
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn articles(&self) -> &ArticleStore {
        &self.articles
    }

    pub fn known_urls(&self) -> Vec<&str> {
        self.articles.urls()
    }

    pub fn reply_id_for(target: &PostId) -> ReplyId {
        ReplyId::new(format!("reply-{target}"))
    }

    /// Ranks articles and renders the prompt without calling any client.
    pub fn prepare(
        &self,
        target: &PostRecord,
        target_embedding: &EmbeddingVector,
    ) -> Result<(PromptAssembly, Vec<RetrievalScore>), ResponderError> {
        let ranked = rank_articles(target_embedding, self.articles.articles(), self.top_k)?;
        let prompt = assemble_prompt(&target.text, &ranked, self.fewshot.as_ref(), &self.preamble)?;
        let scores = ranked
            .iter()
            .map(|r| RetrievalScore {
                article_id: r.article.title.clone(),
                similarity: r.similarity,
            })
            .collect();
        Ok((prompt, scores))
    }

    pub fn respond(
        &self,
        target: &PostRecord,
        target_embedding: &EmbeddingVector,
        client: &dyn GenerationClient,
        now: Timestamp,
    ) -> Result<CandidateReply, ResponderError> {
        let _guard = {
            let mut set = self.in_flight.lock();
            if !set.insert(target.post_id.clone()) {
                return Err(ResponderError::Busy(target.post_id.clone()));
            }
            InFlight {
                set: &self.in_flight,
                id: target.post_id.clone(),
            }
        };
        let (prompt, scores) = self.prepare(target, target_embedding)?;
        let ctx = ReplyContext {
            reply_id: Self::reply_id_for(&target.post_id),
            target_post_id: target.post_id.clone(),
            retrieval_scores: scores,
            known_urls: self.known_urls().into_iter().map(str::to_owned).collect(),
            pricing: self.pricing,
            now,
        };
        generate_reply(&prompt, client, &ctx)
    }
}
