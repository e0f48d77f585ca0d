use chrono::Duration;

use crate::ingest::MetricsSnapshot;
use crate::types::Timestamp;

/// Whether the impressions visible at `as_of` had already reached
/// `threshold_fraction` of the last impressions in `history`.
/// `history` must be ordered by time.
pub fn saturation_check(history: &[MetricsSnapshot], as_of: Timestamp, threshold_fraction: f64) -> bool {
    let Some(last) = history.last() else {
        return true;
    };
    let seen = history
        .iter()
        .take_while(|s| s.taken_at <= as_of)
        .last()
        .map_or(0, |s| s.impressions);
    seen as f64 >= threshold_fraction * last.impressions as f64
}

/// Share of histories saturated `age` after their post was created.
pub fn saturated_share(histories: &[(Timestamp, Vec<MetricsSnapshot>)], age: Duration, threshold_fraction: f64) -> Option<f64> {
    if histories.is_empty() {
        return None;
    }
    let n = histories
        .iter()
        .filter(|(created, h)| saturation_check(h, *created + age, threshold_fraction))
        .count();
    Some(n as f64 / histories.len() as f64)
}
