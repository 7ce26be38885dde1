//! Cadence scheduler driven by explicit `tick(now)` calls.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::connectors::ThrottlePolicy;
use crate::platform::Platform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    ScheduledCrawl,
    Backfill,
    Renormalize,
    Reindex,
    StatsExport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub kind: JobKind,
    pub platform: Option<Platform>,
    pub handle: Option<String>,
    /// Seconds between runs; one-shot when absent.
    pub cadence_secs: Option<i64>,
    pub retry: ThrottlePolicy,
}

impl JobSpec {
    pub fn scope(&self) -> String {
        format!(
            "{:?}/{}/{}",
            self.kind,
            self.platform.map(|p| p.as_str()).unwrap_or("*"),
            self.handle.as_deref().unwrap_or("*")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Launch {
    pub job_id: String,
    /// The due slot this launch serves.
    pub slot: DateTime<Utc>,
    pub launched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JobState {
    spec: JobSpec,
    next_due: Option<DateTime<Utc>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("recurring job {0} needs a positive cadence")]
    BadCadence(String),
    #[error("job {0} already exists")]
    Duplicate(String),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Scheduler {
    jobs: BTreeMap<String, JobState>,
    running: BTreeSet<String>,
    log: Vec<Launch>,
}

impl Scheduler {
    /// One crawl job per enabled platform and a daily backfill sweep, all
    /// first due at `anchor`.
    pub fn from_config(cfg: &Config, anchor: DateTime<Utc>) -> Self {
        let mut s = Self::default();
        for (p, pc) in &cfg.platforms {
            if !pc.enabled {
                continue;
            }
            let spec = JobSpec {
                job_id: format!("crawl:{p}"),
                kind: JobKind::ScheduledCrawl,
                platform: Some(*p),
                handle: None,
                cadence_secs: Some(i64::from(pc.cadence_hours) * 3600),
                retry: pc.throttle,
            };
            s.add(spec, anchor).expect("validated config");
        }
        let backfill = JobSpec {
            job_id: "backfill".into(),
            kind: JobKind::Backfill,
            platform: None,
            handle: None,
            cadence_secs: Some(86_400),
            retry: ThrottlePolicy::default(),
        };
        s.add(backfill, anchor).expect("fresh scheduler");
        s
    }

    pub fn add(&mut self, spec: JobSpec, first_due: DateTime<Utc>) -> Result<(), ScheduleError> {
        if spec.cadence_secs.is_some_and(|c| c <= 0) {
            return Err(ScheduleError::BadCadence(spec.job_id));
        }
        if self.jobs.contains_key(&spec.job_id) {
            return Err(ScheduleError::Duplicate(spec.job_id));
        }
        self.jobs.insert(spec.job_id.clone(), JobState { spec, next_due: Some(first_due) });
        Ok(())
    }

    pub fn spec(&self, job_id: &str) -> Option<&JobSpec> {
        self.jobs.get(job_id).map(|j| &j.spec)
    }

    pub fn next_due(&self, job_id: &str) -> Option<DateTime<Utc>> {
        self.jobs.get(job_id).and_then(|j| j.next_due)
    }

    /// Launches every job due at or before `now` whose scope is idle.
    /// Missed slots collapse into one launch; the next due time moves to
    /// the first slot after `now`.
    pub fn tick(&mut self, now: DateTime<Utc>) -> Vec<String> {
        let mut launched = Vec::new();
        for (id, job) in self.jobs.iter_mut() {
            let Some(due) = job.next_due else { continue };
            if due > now {
                continue;
            }
            let scope = job.spec.scope();
            if self.running.contains(&scope) {
                continue;
            }
            job.next_due = job.spec.cadence_secs.map(|c| {
                let c = Duration::seconds(c);
                let behind = (now - due).num_seconds() / c.num_seconds();
                due + c * (behind as i32 + 1)
            });
            self.running.insert(scope);
            self.log.push(Launch { job_id: id.clone(), slot: due, launched_at: now });
            launched.push(id.clone());
        }
        launched
    }

    /// Marks a launched job finished so its scope may run again.
    pub fn finish(&mut self, job_id: &str) {
        if let Some(j) = self.jobs.get(job_id) {
            self.running.remove(&j.spec.scope());
        }
    }

    pub fn is_running(&self, job_id: &str) -> bool {
        self.jobs.get(job_id).is_some_and(|j| self.running.contains(&j.spec.scope()))
    }

    pub fn log(&self) -> &[Launch] {
        &self.log
    }

    pub fn job_ids(&self) -> Vec<String> {
        self.jobs.keys().cloned().collect()
    }
}
