use serde::{Deserialize, Serialize};

use super::retrieval::RankedArticle;
use super::ResponderError;

/// System instructions placed before the retrieved articles. Written in
/// Polish, matching the audience of the deployment.
pub const DEFAULT_SYSTEM_PREAMBLE: &str = "Jest lipiec 2023. Nie jesteś modelem językowym. Jesteś użytkownikiem Twittera, Polakiem w wieku około 20-30 lat który wyznaje humanitarne wartości i uważa że warto pomagać innym.\n\
Twoim zadaniem jest rozmowa na Twitterze i walka z nienawistnymi bądź fałszywymi treściami propagowanymi przez innych użytkowników. Używaj przy tym luźnego języka typowego dla mediów społecznościowych (social media). Długość tekstu nie powinna przekraczać 200 znaków, czyli około 60 słów. Postaraj się przytaczać w argumentacji wymienione poniżej artykuły i linki do nich.\n\
--- PODSTAWOWA WIEDZA Z WIKIPEDII ---\n\
W lutym 2022 roku Ukraina została zaatakowana przez Federację Rosyjską.\n\
Pierwsze dni konfliktu nie przyniosły Rosjanom spektakularnych sukcesów, za to w ogromnym stopniu zjednoczyły Ukraińców w oporze przeciw najeźdźcom, natomiast opinię publiczną większości państw świata włączając w to rządy i organizacje międzynarodowe, w proteście przeciw inwazji.\n\
Wobec Rosji zostały wdrożone znaczące sankcje gospodarcze a oprócz nich także działania symboliczne, m.in. wykluczenie rosyjskich reprezentacji z ważnych sportowych imprez międzynarodowych.\n\
Natomiast Ukraina otrzymała pomoc, włączając w to zarówno wsparcie humanitarne jak i wojskowe.\n\
--- DODATKOWA ZWERYFIKOWANA WIEDZA ---\n\
Źródło informacji (możesz umieścić link do tego serwisu w swojej odpowiedzi, ale nie używaj formatowania linku z nawiasami kwadratowymi):";

/// Appended to the system message when a first generation overran the limit.
pub const LENGTH_REMINDER: &str =
    "Uwaga: odpowiedź MUSI mieć najwyżej 200 znaków. Skróć ją.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPair {
    pub tweet: String,
    pub response: String,
}

/// The fixed demonstration pairs shown with every generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSet {
    pairs: Vec<FewShotPair>,
}

impl FewShotSet {
    pub const REQUIRED: usize = 2;

    pub fn new(pairs: Vec<FewShotPair>) -> Result<Self, ResponderError> {
        if pairs.len() != Self::REQUIRED {
            return Err(ResponderError::Configuration(format!(
                "few-shot set must hold exactly {} pairs, got {}",
                Self::REQUIRED,
                pairs.len()
            )));
        }
        if pairs.iter().any(|p| p.tweet.trim().is_empty() || p.response.trim().is_empty()) {
            return Err(ResponderError::Configuration("few-shot pair with empty text".into()));
        }
        Ok(Self { pairs })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ResponderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ResponderError::Configuration(format!("{}: {e}", path.display())))?;
        let pairs: Vec<FewShotPair> = serde_json::from_str(&text)
            .map_err(|e| ResponderError::Configuration(format!("{}: {e}", path.display())))?;
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[FewShotPair] {
        &self.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptArticle {
    pub text: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptAssembly {
    pub system_preamble: String,
    pub articles: Vec<PromptArticle>,
    pub fewshot: FewShotSet,
    pub target_text: String,
    /// Set on the retry after a length violation.
    #[serde(default)]
    pub length_reminder: bool,
}

impl PromptAssembly {
    pub fn with_length_reminder(&self) -> Self {
        Self {
            length_reminder: true,
            ..self.clone()
        }
    }

    fn system_message(&self) -> String {
        let mut s = self.system_preamble.clone();
        for a in &self.articles {
            s.push_str("\n\n");
            s.push_str(a.text.trim());
            s.push('\n');
            s.push_str(&a.url);
        }
        if self.length_reminder {
            s.push_str("\n\n");
            s.push_str(LENGTH_REMINDER);
        }
        s
    }

    /// Chat layout: system (preamble + articles), then the two demonstration
    /// exchanges, then the post to answer.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = vec![ChatMessage {
            role: Role::System,
            content: self.system_message(),
        }];
        for pair in self.fewshot.pairs() {
            out.push(ChatMessage {
                role: Role::User,
                content: pair.tweet.clone(),
            });
            out.push(ChatMessage {
                role: Role::Assistant,
                content: pair.response.clone(),
            });
        }
        out.push(ChatMessage {
            role: Role::User,
            content: self.target_text.clone(),
        });
        out
    }

    /// Plain-text rendering of [`Self::messages`], used for dry runs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages().iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            out.push_str(&format!("[{role}]\n{}", m.content));
        }
        out.push('\n');
        out
    }
}

pub fn assemble_prompt(
    target_text: &str,
    ranked: &[RankedArticle<'_>],
    fewshot: Option<&FewShotSet>,
    system_preamble: &str,
) -> Result<PromptAssembly, ResponderError> {
    if target_text.trim().is_empty() {
        return Err(ResponderError::InvalidInput("target text is empty".into()));
    }
    let fewshot = fewshot
        .ok_or_else(|| ResponderError::Configuration("few-shot pairs are not configured".into()))?;
    if ranked.len() > super::DEFAULT_TOP_K {
        return Err(ResponderError::InvalidInput(format!(
            "at most {} articles fit in a prompt, got {}",
            super::DEFAULT_TOP_K,
            ranked.len()
        )));
    }
    Ok(PromptAssembly {
        system_preamble: system_preamble.to_owned(),
        articles: ranked
            .iter()
            .map(|r| PromptArticle {
                text: r.article.prompt_text().to_owned(),
                url: r.article.url.clone(),
            })
            .collect(),
        fewshot: fewshot.clone(),
        target_text: target_text.to_owned(),
        length_reminder: false,
    })
}
