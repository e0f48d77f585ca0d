use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ResponderError;
use crate::classifier::{embed, EmbeddingProvider, EmbeddingVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArticleCategory {
    #[serde(rename = "Benefits and Allowances")]
    BenefitsAndAllowances,
    #[serde(rename = "Expenditures and Costs")]
    ExpendituresAndCosts,
    #[serde(rename = "Statistical Data")]
    StatisticalData,
    #[serde(rename = "Military Activities")]
    MilitaryActivities,
    #[serde(rename = "Opinions and Analysis")]
    OpinionsAndAnalysis,
    #[serde(rename = "Current News")]
    CurrentNews,
    #[serde(rename = "Others")]
    Others,
}

/// A verified source the generator may cite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub last_update: NaiveDate,
    pub category: ArticleCategory,
    pub url: String,
    pub text: String,
    pub summary: String,
    /// Cached embedding; filled by [`ArticleStore::embed_missing`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

impl Article {
    pub fn validate(&self) -> Result<(), ResponderError> {
        if self.title.trim().is_empty() {
            return Err(ResponderError::InvalidInput("article title is empty".into()));
        }
        let parsed = reqwest::Url::parse(&self.url).map_err(|e| {
            ResponderError::InvalidInput(format!("article `{}` has malformed url: {e}", self.title))
        })?;
        if !matches!(parsed.scheme(), "http" | "https") || parsed.host_str().is_none() {
            return Err(ResponderError::InvalidInput(format!(
                "article `{}` url must be http(s) with a host",
                self.title
            )));
        }
        Ok(())
    }

    /// Text used for the article in prompts: the summary when present.
    pub fn prompt_text(&self) -> &str {
        if self.summary.trim().is_empty() {
            &self.text
        } else {
            &self.summary
        }
    }

    fn embedding_input(&self) -> String {
        format!("{}\n{}", self.title, self.prompt_text())
    }
}

/// JSON array of articles with their embedding cache.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArticleStore {
    articles: Vec<Article>,
}

impl ArticleStore {
    pub fn new(articles: Vec<Article>) -> Result<Self, ResponderError> {
        for a in &articles {
            a.validate()?;
        }
        let mut titles: Vec<&str> = articles.iter().map(|a| a.title.as_str()).collect();
        titles.sort_unstable();
        if let Some(w) = titles.windows(2).find(|w| w[0] == w[1]) {
            return Err(ResponderError::InvalidInput(format!("duplicate article title `{}`", w[0])));
        }
        Ok(Self { articles })
    }

    pub fn load(path: &Path) -> Result<Self, ResponderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ResponderError::Configuration(format!("{}: {e}", path.display())))?;
        let articles: Vec<Article> = serde_json::from_str(&text)
            .map_err(|e| ResponderError::Configuration(format!("{}: {e}", path.display())))?;
        Self::new(articles)
    }

    pub fn save(&self, path: &Path) -> Result<(), ResponderError> {
        let json = serde_json::to_string_pretty(&self.articles).expect("articles serialize");
        std::fs::write(path, json)
            .map_err(|e| ResponderError::Configuration(format!("{}: {e}", path.display())))
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn urls(&self) -> Vec<&str> {
        self.articles.iter().map(|a| a.url.as_str()).collect()
    }

    /// Embeds every article lacking an embedding (or whose cached vector has
    /// the wrong dimension). Returns how many were embedded.
    pub fn embed_missing(&mut self, provider: &dyn EmbeddingProvider) -> Result<usize, ResponderError> {
        let mut n = 0;
        for a in &mut self.articles {
            let stale = a.embedding.as_ref().is_none_or(|e| e.dim() != provider.dim());
            if stale {
                a.embedding = Some(embed(&a.embedding_input(), provider)?);
                n += 1;
            }
        }
        Ok(n)
    }
}
