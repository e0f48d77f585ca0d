use serde::{Deserialize, Serialize};

use super::IngestError;

/// Keyword list for the recent-search endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub terms: Vec<String>,
    #[serde(default = "default_true")]
    pub exclude_retweets: bool,
    pub language: String,
}

fn default_true() -> bool {
    true
}

/// Terms of the narrow query aimed at hate speech against Ukrainian migrants.
pub const HARMFUL_QUERY_TERMS: &[&str] = &[
    "ukraina",
    "ukraiński",
    "ukraińcy",
    "ukraińców",
    "ukraińca",
    "bandera",
    "banderowcy",
    "banderowscy",
    "upadlina",
    "upadlińscy",
    "ukropol",
    "ukropolin",
    "wołyń",
    "wołyński",
    "wołyńskie",
    "ukrainizacja",
    "ukrainizacji",
    "ukrainizację",
    "przebywający",
    "pomoc",
    "dzicz",
    "ukry",
    "ukrowie",
    "przywileje",
    "dziczy",
    "wynocha",
    "pobór",
    "dezerter",
    "#StopUkrainizacjiPolski",
    "#ToNieNaszaWojna",
    "#StopUkroPol",
    "#StopbanderyzacjiPolski",
    "#żebyPolskabyłapolska",
];

/// Terms of the broad war-related collection query.
pub const BROAD_QUERY_TERMS: &[&str] = &[
    "ukraina",
    "ukraiński",
    "rosja",
    "rosyjski",
    "putin",
    "sowiecki",
    "kreml",
    "kremlowski",
    "mińsk",
    "NATO",
    "kijów",
    "moskwa",
    "zełeński",
    "sankcje",
    "rubel",
    "donbas",
    "UKR",
    "RUS",
    "#ukraine",
    "#ukraina",
    "#russia",
    "#rosja",
    "#war",
    "#wojna",
    "#warinukraine",
    "#wojnawukrainie",
    "#wojnanaukrainie",
    "#standwithukraine",
    "#ukrainerussiawar",
    "#putin",
    "#ukrainewar",
    "#putinwarcrimes",
    "#ukraineunderattack",
    "#russianaggression",
];

impl QuerySpec {
    pub fn new(terms: &[&str], exclude_retweets: bool, language: &str) -> Self {
        Self {
            terms: terms.iter().map(|t| (*t).to_owned()).collect(),
            exclude_retweets,
            language: language.to_owned(),
        }
    }

    pub fn harmful_polish() -> Self {
        Self::new(HARMFUL_QUERY_TERMS, true, "pl")
    }

    pub fn broad_polish() -> Self {
        Self::new(BROAD_QUERY_TERMS, true, "pl")
    }
}

/// Renders `(t1 OR t2 ...) [-is:retweet] lang:xx`.
pub fn build_query(spec: &QuerySpec) -> Result<String, IngestError> {
    if spec.terms.is_empty() {
        return Err(IngestError::InvalidSpec("term list is empty".into()));
    }
    if let Some(bad) = spec
        .terms
        .iter()
        .find(|t| t.trim().is_empty() || t.chars().any(char::is_whitespace) || t.contains(['(', ')']))
    {
        return Err(IngestError::InvalidSpec(format!(
            "term `{bad}` must be a single non-empty token"
        )));
    }
    if spec.language.trim().is_empty() || spec.language.chars().any(char::is_whitespace) {
        return Err(IngestError::InvalidSpec("language tag must be a single token".into()));
    }
    let mut out = format!("({})", spec.terms.join(" OR "));
    if spec.exclude_retweets {
        out.push_str(" -is:retweet");
    }
    out.push_str(" lang:");
    out.push_str(&spec.language);
    Ok(out)
}

/// Offline evaluation of a rendered query against post text, used by the
/// replay source so that replays filter exactly like the live search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryMatcher {
    terms: Vec<String>,
    exclude_retweets: bool,
    language: Option<String>,
}

impl QueryMatcher {
    pub fn parse(query: &str) -> Result<Self, IngestError> {
        let query = query.trim();
        let rest = query
            .strip_prefix('(')
            .ok_or_else(|| IngestError::InvalidSpec("query must start with `(`".into()))?;
        let close = rest
            .find(')')
            .ok_or_else(|| IngestError::InvalidSpec("unbalanced parenthesis".into()))?;
        let terms: Vec<String> = rest[..close]
            .split(" OR ")
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Err(IngestError::InvalidSpec("query has no terms".into()));
        }
        let mut exclude_retweets = false;
        let mut language = None;
        for token in rest[close + 1..].split_whitespace() {
            if token == "-is:retweet" {
                exclude_retweets = true;
            } else if let Some(lang) = token.strip_prefix("lang:") {
                language = Some(lang.to_owned());
            } else {
                return Err(IngestError::InvalidSpec(format!("unsupported operator `{token}`")));
            }
        }
        Ok(Self {
            terms,
            exclude_retweets,
            language,
        })
    }

    pub fn excludes_retweets(&self) -> bool {
        self.exclude_retweets
    }

    pub fn matches(&self, text: &str, language_tag: &str) -> bool {
        if let Some(lang) = &self.language {
            if lang != language_tag {
                return false;
            }
        }
        tokens(text).any(|tok| self.terms.contains(&tok))
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '#' || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}
