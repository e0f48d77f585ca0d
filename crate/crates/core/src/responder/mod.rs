//! Retrieval-grounded reply generation.

mod article;
mod cost;
mod generation;
mod prompt;
mod retrieval;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use article::{Article, ArticleCategory, ArticleStore};
pub use cost::{estimate_cost, Pricing};
pub use generation::{
    generate_reply, Generation, GenerationClient, RemoteChatClient, ReplayLogClient, ReplyContext,
    Responder, ScriptedClient, TemplateClient,
};
pub use prompt::{
    assemble_prompt, ChatMessage, FewShotPair, Role, FewShotSet, PromptArticle, PromptAssembly,
    DEFAULT_SYSTEM_PREAMBLE, LENGTH_REMINDER,
};
pub use retrieval::{rank_articles, RankedArticle, DEFAULT_TOP_K};

use crate::classifier::ClassifierError;
use crate::types::{PostId, ReplyId, Timestamp};

/// Hard cap on reply length, in Unicode scalar values.
pub const MAX_REPLY_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum ResponderError {
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration: {0}")]
    Configuration(String),
    #[error("generation failed: {0}")]
    TransientGeneration(String),
    #[error("reply has {chars} characters, limit is {limit}")]
    LengthViolation { chars: usize, limit: usize },
    #[error("reply invariant violated: {0}")]
    Invariant(String),
    #[error("a generation for post {0} is already in flight")]
    Busy(PostId),
    #[error(transparent)]
    Embedding(#[from] ClassifierError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    pub article_id: String,
    pub similarity: f64,
}

/// A generated reply awaiting review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReply {
    pub reply_id: ReplyId,
    pub target_post_id: PostId,
    pub text: String,
    pub cited_urls: Vec<String>,
    pub retrieval_scores: Vec<RetrievalScore>,
    pub generation_cost_usd: f64,
    pub created_at: Timestamp,
}

impl CandidateReply {
    pub fn char_count(&self) -> usize {
        self.text.chars().count()
    }

    pub fn has_link(&self) -> bool {
        !self.cited_urls.is_empty()
    }

    /// Length cap, citation membership and score ordering.
    pub fn validate(&self, known_urls: &[&str]) -> Result<(), ResponderError> {
        let chars = self.char_count();
        if chars > MAX_REPLY_CHARS {
            return Err(ResponderError::Invariant(format!(
                "reply has {chars} characters, limit is {MAX_REPLY_CHARS}"
            )));
        }
        if self.text.trim().is_empty() {
            return Err(ResponderError::Invariant("reply text is empty".into()));
        }
        if let Some(url) = self.cited_urls.iter().find(|u| !known_urls.contains(&u.as_str())) {
            return Err(ResponderError::Invariant(format!(
                "cited url {url} is not in the article store"
            )));
        }
        if self
            .retrieval_scores
            .windows(2)
            .any(|w| w[0].similarity < w[1].similarity)
        {
            return Err(ResponderError::Invariant(
                "retrieval scores are not sorted descending".into(),
            ));
        }
        if self.generation_cost_usd.is_nan() || self.generation_cost_usd < 0.0 {
            return Err(ResponderError::Invariant("generation cost is negative or NaN".into()));
        }
        Ok(())
    }
}

/// Store URLs that occur verbatim in `text`, in store order, deduplicated.
pub fn extract_cited_urls(text: &str, known_urls: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for url in known_urls {
        if !url.is_empty() && text.contains(url) && !out.iter().any(|u| u == url) {
            out.push((*url).to_owned());
        }
    }
    out
}
