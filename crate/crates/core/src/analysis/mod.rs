//! Engagement and reply-ratio metrics over finished assignments, with
//! two-sample tests and report rendering.

mod compare;
mod report;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{
    compare_groups, first_reply_share, link_impact, percentile_table, PercentileRow,
    PercentileTable, TestResult, DEFAULT_RESAMPLES,
};
pub use report::{build_report, AnalysisReport, ExclusionCounts};
pub use stats::{
    bootstrap_p, ln_gamma, mean, nearest_rank, regularized_incomplete_beta, student_t_sf_two_sided,
    welch_t, Tail, WelchResult,
};

use crate::store::StoreState;
use crate::types::{Arm, PostId, ThreadPosition};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("observation {post_id} excluded: {reason}")]
    Excluded { post_id: PostId, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("both samples have zero variance")]
    DegenerateVariance,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub post_id: PostId,
    pub arm: Arm,
    pub is_reply: bool,
    pub delta_likes: i64,
    pub delta_impressions: i64,
    /// Replies from others; the bot's own reply predates the initial snapshot.
    pub delta_replies: i64,
    pub has_link: bool,
    pub was_first_reply: bool,
}

impl Observation {
    pub fn position(&self) -> ThreadPosition {
        ThreadPosition::of(self.is_reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Engagement,
    #[serde(alias = "replies")]
    ReplyRatio,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Engagement => "engagement",
            Self::ReplyRatio => "reply_ratio",
        }
    }

    pub fn value(self, obs: &Observation) -> Result<f64, AnalysisError> {
        match self {
            Self::Engagement => engagement(obs),
            Self::ReplyRatio => reply_ratio(obs),
        }
    }

    fn numerator(self, obs: &Observation) -> i64 {
        match self {
            Self::Engagement => obs.delta_likes,
            Self::ReplyRatio => obs.delta_replies,
        }
    }

    /// The tail matching the direction the effect is expected in.
    pub fn default_tail(self) -> Tail {
        match self {
            Self::Engagement => Tail::Lower,
            Self::ReplyRatio => Tail::Upper,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "engagement" => Ok(Self::Engagement),
            "replies" | "reply_ratio" => Ok(Self::ReplyRatio),
            other => Err(AnalysisError::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

fn ratio(obs: &Observation, numerator: i64, what: &str) -> Result<f64, AnalysisError> {
    if obs.delta_impressions <= 0 {
        return Err(AnalysisError::Excluded {
            post_id: obs.post_id.clone(),
            reason: format!("impressions change {} is not positive", obs.delta_impressions),
        });
    }
    if numerator < 0 {
        return Err(AnalysisError::Excluded {
            post_id: obs.post_id.clone(),
            reason: format!("{what} change {numerator} is negative"),
        });
    }
    Ok(numerator as f64 / obs.delta_impressions as f64)
}

/// Likes gained per impression gained.
pub fn engagement(obs: &Observation) -> Result<f64, AnalysisError> {
    ratio(obs, obs.delta_likes, "likes")
}

/// Replies gained per impression gained.
pub fn reply_ratio(obs: &Observation) -> Result<f64, AnalysisError> {
    ratio(obs, obs.delta_replies, "replies")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisFilter {
    pub position: ThreadPosition,
    pub min_delta_impressions: i64,
}

impl AnalysisFilter {
    pub fn new(position: ThreadPosition, min_delta_impressions: i64) -> Result<Self, AnalysisError> {
        if min_delta_impressions < 1 {
            return Err(AnalysisError::InvalidParameter(
                "min_delta_impressions must be at least 1".into(),
            ));
        }
        Ok(Self {
            position,
            min_delta_impressions,
        })
    }

    /// Anomaly check for `metric` (when given), then position and the
    /// inclusive impressions floor.
    pub fn keeps(&self, obs: &Observation, metric: Option<Metric>) -> bool {
        if metric.is_some_and(|m| m.numerator(obs) < 0) {
            return false;
        }
        obs.position() == self.position && obs.delta_impressions >= self.min_delta_impressions
    }
}

/// Observations `f` keeps, in input order.
pub fn filter_observations(all: &[Observation], f: &AnalysisFilter, metric: Option<Metric>) -> Vec<Observation> {
    all.iter().filter(|o| f.keeps(o, metric)).cloned().collect()
}

/// One observation per assignment that finished monitoring and was not
/// removed, deleted or left unposted.
pub fn observations(state: &StoreState) -> Vec<Observation> {
    state
        .assignments
        .values()
        .filter(|a| a.is_analyzable())
        .filter_map(|a| {
            let (i, f) = (a.initial_snapshot.as_ref()?, a.final_snapshot.as_ref()?);
            let d = |x: u64, y: u64| x as i64 - y as i64;
            Some(Observation {
                post_id: a.post_id.clone(),
                arm: a.arm,
                is_reply: state.posts.get(&a.post_id).is_some_and(|p| p.is_reply),
                delta_likes: d(f.likes, i.likes),
                delta_impressions: d(f.impressions, i.impressions),
                delta_replies: d(f.replies, i.replies),
                has_link: a.has_link,
                was_first_reply: a.was_first_reply,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn obs(id: &str, arm: Arm, likes: i64, impr: i64, replies: i64) -> Observation {
        Observation {
            post_id: PostId::from(id),
            arm,
            is_reply: false,
            delta_likes: likes,
            delta_impressions: impr,
            delta_replies: replies,
            has_link: false,
            was_first_reply: false,
        }
    }

    #[test]
    fn metric_formulas() {
        assert_eq!(engagement(&obs("a", Arm::Control, 1, 100, 0)).unwrap(), 0.01);
        assert_eq!(engagement(&obs("a", Arm::Control, 0, 50, 0)).unwrap(), 0.0);
        assert_eq!(reply_ratio(&obs("a", Arm::Control, 0, 100, 2)).unwrap(), 0.02);
        assert!(matches!(engagement(&obs("a", Arm::Control, 1, 0, 0)), Err(AnalysisError::Excluded { .. })));
        assert!(reply_ratio(&obs("a", Arm::Control, 0, 10, -1)).is_err());
    }

    #[test]
    fn filter_boundaries() {
        let f = AnalysisFilter::new(ThreadPosition::Original, 10).unwrap();
        let all = vec![
            obs("keep", Arm::Control, 0, 10, 0),
            obs("low", Arm::Control, 0, 9, 0),
            obs("anomaly", Arm::Control, -1, 50, 0),
            Observation { is_reply: true, ..obs("reply", Arm::Control, 0, 50, 0) },
        ];
        let kept = filter_observations(&all, &f, Some(Metric::Engagement));
        assert_eq!(kept.iter().map(|o| o.post_id.as_str()).collect::<Vec<_>>(), vec!["keep"]);
        assert_eq!(filter_observations(&all, &f, Some(Metric::ReplyRatio)).len(), 2);
        assert!(filter_observations(&[], &f, None).is_empty());
        assert!(AnalysisFilter::new(ThreadPosition::Reply, 0).is_err());
    }

    #[test]
    fn metric_names() {
        assert_eq!("replies".parse::<Metric>().unwrap(), Metric::ReplyRatio);
        assert_eq!("engagement".parse::<Metric>().unwrap(), Metric::Engagement);
        assert!("likes".parse::<Metric>().is_err());
    }
}
