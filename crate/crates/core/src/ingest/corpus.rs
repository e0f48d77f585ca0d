//! Line-delimited JSON replay corpus.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, MetricsSnapshot, PostRecord, PostSource, QueryMatcher};
use crate::review::RejectionCode;
use crate::types::{AuthorId, PostId, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub taken_at: Timestamp,
    pub likes: u64,
    pub impressions: u64,
    pub replies: u64,
}

/// Scripted reviewer outcome for a replayed post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedDecision {
    Approve,
    Reject(RejectionCode),
    Expire,
}

/// Optional per-post simulation script. Absent fields fall back to
/// "the platform behaves the same whether or not we reply" and
/// "the reviewer approves".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimScript {
    /// Counter trajectory used once the bot has replied to this post.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replied_snapshots: Vec<TrajectoryPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ScriptedDecision>,
    /// Text the scripted generator returns for this post.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deleted_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub post_id: PostId,
    pub author_id: AuthorId,
    pub text: String,
    pub created_at: Timestamp,
    pub is_reply: bool,
    #[serde(default)]
    pub parent_id: Option<PostId>,
    #[serde(default = "default_language")]
    pub language_tag: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_retweet: bool,
    #[serde(default)]
    pub snapshots: Vec<TrajectoryPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimScript>,
}

fn default_language() -> String {
    "pl".to_owned()
}

impl CorpusEntry {
    pub fn record(&self) -> PostRecord {
        PostRecord {
            post_id: self.post_id.clone(),
            author_id: self.author_id.clone(),
            text: self.text.clone(),
            created_at: self.created_at,
            is_reply: self.is_reply,
            parent_id: self.parent_id.clone(),
            language_tag: self.language_tag.clone(),
        }
    }

    pub fn is_deleted_at(&self, now: Timestamp) -> bool {
        self.sim
            .as_ref()
            .and_then(|s| s.deleted_at)
            .is_some_and(|d| d <= now)
    }

    /// Counters visible at `now`: the latest trajectory point not after `now`.
    pub fn metrics_at(&self, now: Timestamp, replied: bool) -> MetricsSnapshot {
        let trajectory = match &self.sim {
            Some(sim) if replied && !sim.replied_snapshots.is_empty() => &sim.replied_snapshots,
            _ => &self.snapshots,
        };
        let point = trajectory.iter().take_while(|p| p.taken_at <= now).last();
        MetricsSnapshot {
            post_id: self.post_id.clone(),
            taken_at: now,
            likes: point.map_or(0, |p| p.likes),
            impressions: point.map_or(0, |p| p.impressions),
            replies: point.map_or(0, |p| p.replies),
        }
    }
}

pub fn parse_corpus(reader: impl BufRead) -> Result<Vec<CorpusEntry>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::CorpusFormat {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CorpusEntry =
            serde_json::from_str(&line).map_err(|e| IngestError::CorpusFormat {
                line: line_no,
                message: e.to_string(),
            })?;
        let bad = |message: &str| IngestError::CorpusFormat {
            line: line_no,
            message: message.to_owned(),
        };
        if entry.is_reply != entry.parent_id.is_some() {
            return Err(bad("is_reply must be true exactly when parent_id is set"));
        }
        let ordered = |points: &[TrajectoryPoint]| points.windows(2).all(|w| w[0].taken_at <= w[1].taken_at);
        if !ordered(&entry.snapshots) {
            return Err(bad("snapshots are not ordered by taken_at"));
        }
        if let Some(sim) = &entry.sim {
            if !ordered(&sim.replied_snapshots) {
                return Err(bad("replied_snapshots are not ordered by taken_at"));
            }
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>, IngestError> {
    let file = std::fs::File::open(path)
        .map_err(|e| IngestError::TransientSource(format!("{}: {e}", path.display())))?;
    parse_corpus(std::io::BufReader::new(file))
}

/// Deterministic stand-in for the recent-search endpoint.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    entries: Vec<CorpusEntry>,
}

impl ReplaySource {
    pub fn new(entries: Vec<CorpusEntry>) -> Self {
        Self { entries }
    }

    pub fn open(path: &Path) -> Result<Self, IngestError> {
        load_corpus(path).map(Self::new)
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn entry(&self, id: &PostId) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| &e.post_id == id)
    }
}

impl PostSource for ReplaySource {
    fn search(
        &mut self,
        query: &str,
        now: Timestamp,
    ) -> Result<Vec<(PostRecord, MetricsSnapshot)>, IngestError> {
        let matcher = QueryMatcher::parse(query)?;
        Ok(self
            .entries
            .iter()
            .filter(|e| e.created_at <= now && !e.is_deleted_at(now))
            .filter(|e| !(matcher.excludes_retweets() && e.is_retweet))
            .filter(|e| matcher.matches(&e.text, &e.language_tag))
            .map(|e| (e.record(), e.metrics_at(now, false)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"post_id":"1","author_id":"a","text":"pomoc dla nich","created_at":"2023-08-24T08:00:00Z","is_reply":false,"parent_id":null,"snapshots":[{"taken_at":"2023-08-24T09:00:00Z","likes":1,"impressions":20,"replies":0},{"taken_at":"2023-08-24T12:00:00Z","likes":3,"impressions":80,"replies":1}]}"#;

    #[test]
    fn parses_and_reads_trajectory() {
        let corpus = parse_corpus(format!("{LINE}\n\n").as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        let e = &corpus[0];
        let at = |h| chrono::DateTime::parse_from_rfc3339(&format!("2023-08-24T{h:02}:00:00Z")).unwrap().to_utc();
        assert_eq!(e.metrics_at(at(8), false).impressions, 0);
        assert_eq!(e.metrics_at(at(10), false).impressions, 20);
        assert_eq!(e.metrics_at(at(13), false).likes, 3);
        assert_eq!(e.metrics_at(at(13), true).likes, 3);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{LINE}\n{{not json\n");
        match parse_corpus(text.as_bytes()) {
            Err(IngestError::CorpusFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_is_fine() {
        assert!(parse_corpus(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn replay_applies_query_and_language() {
        let mut corpus = parse_corpus(LINE.as_bytes()).unwrap();
        let mut other = corpus[0].clone();
        other.post_id = "2".into();
        other.language_tag = "en".into();
        corpus.push(other);
        let mut src = ReplaySource::new(corpus);
        let now = chrono::DateTime::parse_from_rfc3339("2023-08-24T10:00:00Z").unwrap().to_utc();
        let got = src.search("(pomoc) -is:retweet lang:pl", now).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].1.impressions, 20);
        assert!(src.search("(nic) lang:pl", now).unwrap().is_empty());
    }
}
