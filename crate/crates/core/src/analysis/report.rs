use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::compare::{compare_groups, first_reply_share, link_impact, percentile_table, PercentileTable, TestResult};
use super::stats::Tail;
use super::{filter_observations, observations, AnalysisError, AnalysisFilter, Metric, Observation};
use crate::store::StoreState;
use crate::types::ThreadPosition;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub total: usize,
    pub other_position: usize,
    pub anomalies: usize,
    pub below_min_impressions: usize,
    pub kept: usize,
}

impl ExclusionCounts {
    fn count(all: &[Observation], f: &AnalysisFilter, metric: Metric) -> Self {
        let mut c = Self {
            total: all.len(),
            ..Self::default()
        };
        for o in all {
            if o.position() != f.position {
                c.other_position += 1;
            } else if metric.numerator(o) < 0 {
                c.anomalies += 1;
            } else if o.delta_impressions < f.min_delta_impressions {
                c.below_min_impressions += 1;
            } else {
                c.kept += 1;
            }
        }
        c
    }
}

/// Output of `analyze report`. Field names are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metric: Metric,
    pub position: ThreadPosition,
    pub min_delta_impressions: i64,
    pub exclusions: ExclusionCounts,
    pub comparison: TestResult,
    pub percentiles: PercentileTable,
    pub link_impact: Option<TestResult>,
    pub first_reply_share: Option<f64>,
}

pub fn build_report(
    state: &StoreState,
    metric: Metric,
    filter: &AnalysisFilter,
    resamples: usize,
    seed: u64,
    tail: Tail,
) -> Result<AnalysisReport, AnalysisError> {
    let all = observations(state);
    let comparison = compare_groups(&all, filter, metric, resamples, seed, tail)?;
    let kept = filter_observations(&all, filter, Some(metric));
    Ok(AnalysisReport {
        metric,
        position: filter.position,
        min_delta_impressions: filter.min_delta_impressions,
        exclusions: ExclusionCounts::count(&all, filter, metric),
        comparison,
        percentiles: percentile_table(&kept)?,
        link_impact: link_impact(&all, filter, resamples, seed, Metric::ReplyRatio.default_tail()).ok(),
        first_reply_share: first_reply_share(&all, filter).ok(),
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| x.to_string())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:+.1}%"))
}

fn result_block(out: &mut String, title: &str, labels: (&str, &str), r: &TestResult) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "  {:<14} {:>10} {:>12}", "group", "n", "mean");
    let _ = writeln!(out, "  {:<14} {:>10} {:>12.6}", labels.0, r.n_cg, r.cg_mean);
    let _ = writeln!(out, "  {:<14} {:>10} {:>12.6}", labels.1, r.n_eg, r.eg_mean);
    let _ = writeln!(out, "  difference     {:>23}", pct(r.diff_pct_of_cg));
    let _ = writeln!(out, "  welch t        {:>23.4}  (df {:.1})", r.t_statistic, r.degrees_of_freedom);
    let _ = writeln!(out, "  p (t-test)     {:>23.6}", r.p_t_test);
    let _ = writeln!(
        out,
        "  p (bootstrap)  {:>23.6}  ({} tail, {} resamples, seed {})",
        r.p_bootstrap,
        r.tail.as_str(),
        r.resamples,
        r.seed
    );
}

impl AnalysisReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} | {} posts | min delta impressions {}",
            self.metric,
            self.position.as_str(),
            self.min_delta_impressions
        );
        let e = &self.exclusions;
        let _ = writeln!(
            out,
            "observations: {} total, {} other position, {} anomalies, {} below floor, {} kept\n",
            e.total, e.other_position, e.anomalies, e.below_min_impressions, e.kept
        );
        result_block(&mut out, "control vs experimental", ("control", "experimental"), &self.comparison);
        let _ = writeln!(out, "\npercentiles (nearest rank)");
        let _ = writeln!(
            out,
            "  {:<5} {:>10} {:>12} {:>10} {:>12}",
            "", "cg likes", "cg impr", "eg likes", "eg impr"
        );
        for r in &self.percentiles.rows {
            let _ = writeln!(
                out,
                "  {:<5} {:>10} {:>12} {:>10} {:>12}",
                r.label,
                opt(r.cg_likes),
                opt(r.cg_impressions),
                opt(r.eg_likes),
                opt(r.eg_impressions)
            );
        }
        if let Some(l) = &self.link_impact {
            let _ = writeln!(out);
            result_block(&mut out, "reply ratio by link (experimental arm)", ("no link", "link"), l);
        }
        if let Some(s) = self.first_reply_share {
            let _ = writeln!(out, "\nfirst-reply share: {:.1}%", s * 100.0);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
