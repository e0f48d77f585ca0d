//! The live scheduling loop.

use std::time::Duration as StdDuration;

use anyhow::Result;
use counterspeech_core::experiment::{Experiment, MetricsSource};
use counterspeech_core::ingest::PostSource;
use counterspeech_core::review::{ReplyPoster, ReviewKind};
use counterspeech_core::{Clock, ReviewState};

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct TickReport {
    pub ran_window: bool,
    pub snapshots: usize,
    pub expired: usize,
    pub posted: usize,
}

/// One pass: run the current window if it has not run yet, take due
/// snapshots, expire overdue reviews and post approved replies.
pub fn tick(
    exp: &Experiment<'_>,
    source: &mut dyn PostSource,
    metrics: &dyn MetricsSource,
    poster: &dyn ReplyPoster,
    clock: &dyn Clock,
) -> Result<TickReport> {
    let mut report = TickReport::default();
    let now = clock.now();
    if let Ok(start) = exp.schedule().window_for(now) {
        let done = exp.store().read(|s| s.windows.iter().any(|w| w.window_start == start));
        if !done {
            let summary = exp.run_window(source, now)?;
            tracing::info!(?summary, "window complete");
            report.ran_window = true;
        }
    }
    let snaps = exp.run_due_snapshots(metrics, clock.now())?;
    report.snapshots = snaps.initial + snaps.final_;
    let desk = exp.desk();
    report.expired = desk.expire_overdue(clock.now())?;
    let approved: Vec<_> = exp.store().read(|s| {
        s.reviews
            .values()
            .filter(|i| {
                i.kind == ReviewKind::Intervention
                    && i.state == ReviewState::Approved
                    && !s.postings.contains_key(&i.item_id)
            })
            .map(|i| i.item_id.clone())
            .collect()
    });
    for id in approved {
        match desk.post_approved(&id, poster, clock.now()) {
            Ok(_) => report.posted += 1,
            Err(e) => tracing::warn!(item = %id, error = %e, "posting failed"),
        }
    }
    Ok(report)
}

pub fn run_forever(
    exp: &Experiment<'_>,
    source: &mut dyn PostSource,
    metrics: &dyn MetricsSource,
    poster: &dyn ReplyPoster,
    clock: &dyn Clock,
    poll: StdDuration,
) -> Result<()> {
    loop {
        match tick(exp, source, metrics, poster, clock) {
            Ok(r) if r != TickReport::default() => tracing::info!(?r, "tick"),
            Ok(_) => {}
            Err(e) => tracing::error!(error = %e, "tick failed"),
        }
        std::thread::sleep(poll);
    }
}
