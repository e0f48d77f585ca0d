use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_p, mean, nearest_rank, welch_t, Tail};
use super::{filter_observations, AnalysisError, AnalysisFilter, Metric, Observation};
use crate::types::Arm;

pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Two-group comparison. "cg" is the reference group and "eg" the group under
/// test; for link impact they are the unlinked and linked replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub metric: Metric,
    pub cg_mean: f64,
    pub eg_mean: f64,
    /// `None` when the reference mean is zero.
    pub diff_pct_of_cg: Option<f64>,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_t_test: f64,
    pub p_bootstrap: f64,
    pub tail: Tail,
    pub resamples: usize,
    pub seed: u64,
    pub n_cg: usize,
    pub n_eg: usize,
}

fn values(obs: &[&Observation], metric: Metric) -> Result<Vec<f64>, AnalysisError> {
    obs.iter().map(|o| metric.value(o)).collect()
}

fn two_sample(
    reference: &[&Observation],
    treated: &[&Observation],
    metric: Metric,
    resamples: usize,
    seed: u64,
    tail: Tail,
    labels: (&str, &str),
) -> Result<TestResult, AnalysisError> {
    for (group, label) in [(reference, labels.0), (treated, labels.1)] {
        if group.len() < 2 {
            return Err(AnalysisError::InsufficientData(format!(
                "{label} has {} observations, need at least 2",
                group.len()
            )));
        }
    }
    let cg = values(reference, metric)?;
    let eg = values(treated, metric)?;
    let (cg_mean, eg_mean) = (mean(&cg), mean(&eg));
    let w = welch_t(&cg, &eg)?;
    Ok(TestResult {
        metric,
        cg_mean,
        eg_mean,
        diff_pct_of_cg: (cg_mean != 0.0).then(|| (eg_mean - cg_mean) / cg_mean * 100.0),
        t_statistic: w.t,
        degrees_of_freedom: w.df,
        p_t_test: w.p,
        p_bootstrap: bootstrap_p(&cg, eg_mean, resamples, seed, tail)?,
        tail,
        resamples,
        seed,
        n_cg: cg.len(),
        n_eg: eg.len(),
    })
}

/// Control versus experimental arm on the filtered observations.
pub fn compare_groups(
    all: &[Observation],
    f: &AnalysisFilter,
    metric: Metric,
    resamples: usize,
    seed: u64,
    tail: Tail,
) -> Result<TestResult, AnalysisError> {
    let kept = filter_observations(all, f, Some(metric));
    let cg: Vec<&Observation> = kept.iter().filter(|o| o.arm == Arm::Control).collect();
    let eg: Vec<&Observation> = kept.iter().filter(|o| o.arm == Arm::Experimental).collect();
    two_sample(&cg, &eg, metric, resamples, seed, tail, ("control arm", "experimental arm"))
}

/// Reply ratio of linked versus unlinked interventions, experimental arm only.
pub fn link_impact(
    obs_exp: &[Observation],
    f: &AnalysisFilter,
    resamples: usize,
    seed: u64,
    tail: Tail,
) -> Result<TestResult, AnalysisError> {
    let kept = filter_observations(obs_exp, f, Some(Metric::ReplyRatio));
    let exp = kept.iter().filter(|o| o.arm == Arm::Experimental);
    let (linked, unlinked): (Vec<&Observation>, Vec<&Observation>) = exp.partition(|o| o.has_link);
    two_sample(&unlinked, &linked, Metric::ReplyRatio, resamples, seed, tail, ("unlinked stratum", "linked stratum"))
}

/// Share of experimental observations where the bot reply was the first one.
pub fn first_reply_share(obs_exp: &[Observation], f: &AnalysisFilter) -> Result<f64, AnalysisError> {
    let kept: Vec<Observation> = filter_observations(obs_exp, f, None)
        .into_iter()
        .filter(|o| o.arm == Arm::Experimental)
        .collect();
    if kept.is_empty() {
        return Err(AnalysisError::InsufficientData("no experimental observations".into()));
    }
    Ok(kept.iter().filter(|o| o.was_first_reply).count() as f64 / kept.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub label: String,
    pub cg_likes: Option<i64>,
    pub cg_impressions: Option<i64>,
    pub eg_likes: Option<i64>,
    pub eg_impressions: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PercentileTable {
    pub rows: Vec<PercentileRow>,
}

const QUANTILES: [(&str, f64); 5] = [("min", 0.0), ("25%", 25.0), ("50%", 50.0), ("75%", 75.0), ("max", 100.0)];

/// Nearest-rank quantiles of likes and impressions changes per arm.
pub fn percentile_table(obs: &[Observation]) -> Result<PercentileTable, AnalysisError> {
    if obs.is_empty() {
        return Err(AnalysisError::InsufficientData("no observations".into()));
    }
    let sorted = |arm: Arm, pick: fn(&Observation) -> i64| {
        let mut v: Vec<i64> = obs.iter().filter(|o| o.arm == arm).map(pick).collect();
        v.sort_unstable();
        v
    };
    let cl = sorted(Arm::Control, |o| o.delta_likes);
    let ci = sorted(Arm::Control, |o| o.delta_impressions);
    let el = sorted(Arm::Experimental, |o| o.delta_likes);
    let ei = sorted(Arm::Experimental, |o| o.delta_impressions);
    let rows = QUANTILES
        .iter()
        .map(|&(label, q)| PercentileRow {
            label: label.to_owned(),
            cg_likes: nearest_rank(&cl, q),
            cg_impressions: nearest_rank(&ci, q),
            eg_likes: nearest_rank(&el, q),
            eg_impressions: nearest_rank(&ei, q),
        })
        .collect();
    Ok(PercentileTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{PostId, ThreadPosition};

    fn obs(id: usize, arm: Arm, likes: i64, impr: i64) -> Observation {
        Observation {
            post_id: PostId::new(format!("p{id}")),
            arm,
            is_reply: false,
            delta_likes: likes,
            delta_impressions: impr,
            delta_replies: likes,
            has_link: id.is_multiple_of(2),
            was_first_reply: id.is_multiple_of(3),
        }
    }

    fn filter() -> AnalysisFilter {
        AnalysisFilter::new(ThreadPosition::Original, 10).unwrap()
    }

    #[test]
    fn identical_arms() {
        let mut all = Vec::new();
        for (i, l) in [1, 4, 9, 2].into_iter().enumerate() {
            all.push(obs(i, Arm::Control, l, 100));
            all.push(obs(i + 10, Arm::Experimental, l, 100));
        }
        let r = compare_groups(&all, &filter(), Metric::Engagement, 1000, 1, Tail::Lower).unwrap();
        assert_eq!(r.diff_pct_of_cg, Some(0.0));
        assert_eq!(r.p_t_test, 1.0);
    }

    #[test]
    fn one_element_arm_is_insufficient() {
        let all = vec![obs(0, Arm::Control, 1, 100), obs(1, Arm::Control, 2, 100), obs(2, Arm::Experimental, 1, 100)];
        let err = compare_groups(&all, &filter(), Metric::Engagement, 10, 1, Tail::Lower).unwrap_err();
        assert!(matches!(err, AnalysisError::InsufficientData(_)));
    }

    #[test]
    fn link_strata_need_both_sides() {
        let all: Vec<Observation> = (0..6)
            .map(|i| Observation { has_link: true, ..obs(i, Arm::Experimental, 1, 100) })
            .collect();
        assert!(link_impact(&all, &filter(), 10, 1, Tail::Upper).is_err());
    }

    #[test]
    fn first_reply_fraction() {
        let all: Vec<Observation> = (0..6).map(|i| obs(i, Arm::Experimental, 1, 100)).collect();
        assert_eq!(first_reply_share(&all, &filter()).unwrap(), 2.0 / 6.0);
        let none: Vec<Observation> = all.iter().map(|o| Observation { was_first_reply: false, ..o.clone() }).collect();
        assert_eq!(first_reply_share(&none, &filter()).unwrap(), 0.0);
        assert!(first_reply_share(&[], &filter()).is_err());
    }

    #[test]
    fn percentiles_single_observation() {
        let t = percentile_table(&[obs(0, Arm::Control, 3, 40)]).unwrap();
        for row in &t.rows {
            assert_eq!((row.cg_likes, row.cg_impressions), (Some(3), Some(40)));
            assert_eq!(row.eg_likes, None);
        }
        assert!(percentile_table(&[]).is_err());
    }
}
