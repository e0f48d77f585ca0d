//! Schedule configuration and its `key = value` file format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveTime};
use chrono_tz::Tz;

use super::ExperimentError;
use crate::types::Timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    /// Local times at which classification windows start.
    pub window_times: Vec<NaiveTime>,
    /// How long after a window start a run is still accepted.
    pub window_slack: Duration,
    pub max_age: Duration,
    /// Local half-open interval `[start, end)` with no interventions.
    pub quiet_start: NaiveTime,
    pub quiet_end: NaiveTime,
    pub monitoring_period: Duration,
    pub initial_snapshot_delay: Duration,
    pub timezone: Tz,
    /// When set, every final snapshot is due at this instant instead of
    /// `assigned_at + monitoring_period`.
    pub global_end: Option<Timestamp>,
}

fn hm(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).expect("valid time")
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            window_times: vec![hm(10, 0), hm(14, 0), hm(18, 0), hm(22, 0)],
            window_slack: Duration::minutes(30),
            max_age: Duration::hours(4),
            quiet_start: hm(0, 0),
            quiet_end: hm(6, 0),
            monitoring_period: Duration::days(6),
            initial_snapshot_delay: Duration::minutes(15),
            timezone: chrono_tz::Europe::Warsaw,
            global_end: None,
        }
    }
}

impl ScheduleConfig {
    pub fn is_quiet(&self, t: NaiveTime) -> bool {
        if self.quiet_start <= self.quiet_end {
            t >= self.quiet_start && t < self.quiet_end
        } else {
            t >= self.quiet_start || t < self.quiet_end
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.window_times.is_empty() {
            return Err(ExperimentError::Config("at least one window time is required".into()));
        }
        for (name, d) in [
            ("window_slack", self.window_slack),
            ("max_age", self.max_age),
            ("monitoring_period", self.monitoring_period),
            ("initial_snapshot_delay", self.initial_snapshot_delay),
        ] {
            if d <= Duration::zero() {
                return Err(ExperimentError::Config(format!("{name} must be positive")));
            }
        }
        if let Some(w) = self.window_times.iter().find(|w| self.is_quiet(**w)) {
            return Err(ExperimentError::Config(format!("window {w} falls in quiet hours")));
        }
        Ok(())
    }

    /// The window start `now` belongs to, or a schedule error.
    pub fn window_for(&self, now: Timestamp) -> Result<Timestamp, ExperimentError> {
        let local = now.with_timezone(&self.timezone);
        if self.is_quiet(local.time()) {
            return Err(ExperimentError::Schedule(format!(
                "{} local is inside quiet hours {}-{}",
                local.format("%H:%M"),
                self.quiet_start.format("%H:%M"),
                self.quiet_end.format("%H:%M")
            )));
        }
        for w in &self.window_times {
            let start = local.date_naive().and_time(*w);
            let Some(start) = start.and_local_timezone(self.timezone).earliest() else {
                continue;
            };
            let start = start.to_utc();
            if now >= start && now - start <= self.window_slack {
                return Ok(start);
            }
        }
        Err(ExperimentError::Schedule(format!(
            "{} local is not within {} min of a scheduled window",
            local.format("%H:%M"),
            self.window_slack.num_minutes()
        )))
    }

    /// Window starts (UTC) falling in `[from, to]`, in order.
    pub fn windows_between(&self, from: Timestamp, to: Timestamp) -> Vec<Timestamp> {
        let mut out = Vec::new();
        let mut day = from.with_timezone(&self.timezone).date_naive();
        let last = to.with_timezone(&self.timezone).date_naive();
        while day <= last {
            for w in &self.window_times {
                if let Some(t) = day.and_time(*w).and_local_timezone(self.timezone).earliest() {
                    let t = t.to_utc();
                    if t >= from && t <= to {
                        out.push(t);
                    }
                }
            }
            day = day.succ_opt().expect("date in range");
        }
        out.sort();
        out
    }

    pub fn final_due(&self, assigned_at: Timestamp) -> Timestamp {
        let own = assigned_at + self.monitoring_period;
        match self.global_end {
            Some(end) => end.max(own),
            None => own,
        }
    }
}

/// Everything an `experiment run` needs, read from a `key = value` file.
/// Lines starting with `#` are comments; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub schedule: ScheduleConfig,
    pub seed: Option<u64>,
    pub store: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub articles: Option<PathBuf>,
    pub fewshot: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

fn parse_time(s: &str) -> Result<NaiveTime, ExperimentError> {
    NaiveTime::parse_from_str(s.trim(), "%H:%M")
        .map_err(|e| ExperimentError::Config(format!("bad time `{s}`: {e}")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ExperimentError> {
    v.parse()
        .map_err(|_| ExperimentError::Config(format!("`{key}` expects a number, got `{v}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut pairs = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ExperimentError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            pairs.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let mut cfg = Self::default();
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() { p } else { base_dir.join(p) }
        };
        for (k, v) in &pairs {
            let s = &mut cfg.schedule;
            match k.as_str() {
                "windows" => {
                    s.window_times = v.split(',').map(parse_time).collect::<Result<_, _>>()?;
                }
                "window_slack_minutes" => s.window_slack = Duration::minutes(parse_num(k, v)?),
                "max_age_hours" => s.max_age = Duration::hours(parse_num(k, v)?),
                "quiet_hours" => {
                    let (a, b) = v.split_once('-').ok_or_else(|| {
                        ExperimentError::Config("quiet_hours expects HH:MM-HH:MM".into())
                    })?;
                    s.quiet_start = parse_time(a)?;
                    s.quiet_end = parse_time(b)?;
                }
                "monitoring_days" => s.monitoring_period = Duration::days(parse_num(k, v)?),
                "initial_snapshot_delay_minutes" => {
                    s.initial_snapshot_delay = Duration::minutes(parse_num(k, v)?)
                }
                "timezone" => {
                    s.timezone = v
                        .parse()
                        .map_err(|_| ExperimentError::Config(format!("unknown timezone `{v}`")))?
                }
                "global_end" => {
                    s.global_end = Some(
                        chrono::DateTime::parse_from_rfc3339(v)
                            .map_err(|e| ExperimentError::Config(format!("global_end: {e}")))?
                            .to_utc(),
                    )
                }
                "seed" => cfg.seed = Some(parse_num(k, v)?),
                "store" => cfg.store = Some(path(v)),
                "model" => cfg.model = Some(path(v)),
                "articles" => cfg.articles = Some(path(v)),
                "fewshot" => cfg.fewshot = Some(path(v)),
                "query" => cfg.query = Some(path(v)),
                "corpus" => cfg.corpus = Some(path(v)),
                other => return Err(ExperimentError::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.schedule.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
