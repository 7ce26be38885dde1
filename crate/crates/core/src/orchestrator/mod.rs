//! Pipeline runner: crawl → raw store → normalize → index/embed, with
//! per-chunk coverage checkpoints, backfill consumption, the cadence
//! scheduler and the metrics surface.

pub mod metrics;
pub mod scheduler;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Duration, NaiveTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::SharedClock;
use crate::config::Config;
use crate::connectors::{ConnectorError, FetchRequest, PlatformConnector, RateLimitedConnector};
use crate::index::{HashingEmbedder, SearchIndex};
use crate::ledger::{
    normalize_intervals, BackfillTask, CrawlLedger, CrawlRun, DayInterval, LedgerError, RunCounts, RunKind,
    RunStatus, TaskState,
};
use crate::normalize::{
    self, project_text_fields, raw_post_id, ApplyEffect, RenormalizeReport, RuleSet, StoreError, UnifiedPost,
    UnifiedStore,
};
use crate::platform::Platform;
use crate::raw_store::{PartitionFilter, PutRequest, RawObject, RawStore, RawStoreError};
use crate::seeds::{LoadReport, SeedError, SeedRegistry};

pub use metrics::Metrics;
pub use scheduler::{JobKind, JobSpec, Launch, Scheduler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Crawl,
    Store,
    Normalize,
    Index,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Crawl, Stage::Store, Stage::Normalize, Stage::Index];
}

/// Test hook: abort the pipeline right after `after` completes for the
/// given account (position in the handle list) and chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interrupt {
    pub handle_index: usize,
    pub chunk_index: usize,
    pub after: Stage,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("interrupted after {stage:?} (handle {handle_index}, chunk {chunk_index})")]
    Interrupted { stage: Stage, handle_index: usize, chunk_index: usize },
    #[error("window start must precede end")]
    BadWindow,
    #[error(transparent)]
    RawStore(#[from] RawStoreError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Seeds(#[from] SeedError),
    #[error("index: {0}")]
    Index(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub fetched: u64,
    pub stored: u64,
    pub deduped: u64,
    pub rejected_invalid: u64,
    pub normalized: u64,
    pub quarantined: u64,
    pub indexed: u64,
    pub embedded: u64,
}

impl StageCounts {
    pub fn add(&mut self, o: &StageCounts) {
        self.fetched += o.fetched;
        self.stored += o.stored;
        self.deduped += o.deduped;
        self.rejected_invalid += o.rejected_invalid;
        self.normalized += o.normalized;
        self.quarantined += o.quarantined;
        self.indexed += o.indexed;
        self.embedded += o.embedded;
    }

    /// The stage conservation equalities.
    pub fn is_conserved(&self) -> bool {
        self.fetched == self.stored + self.rejected_invalid
            && self.stored == self.normalized + self.quarantined
            && self.normalized == self.indexed
            && self.indexed == self.embedded
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountRun {
    pub run_id: String,
    pub platform: Platform,
    pub handle: String,
    pub status: RunStatus,
    pub covered: Vec<DayInterval>,
    pub counts: StageCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineRunReport {
    pub counts: StageCounts,
    pub runs: Vec<AccountRun>,
    pub durations_ms: BTreeMap<String, u64>,
    pub errors: Vec<String>,
}

impl PipelineRunReport {
    fn merge(&mut self, other: PipelineRunReport) {
        self.counts.add(&other.counts);
        self.runs.extend(other.runs);
        for (k, v) in other.durations_ms {
            *self.durations_ms.entry(k).or_default() += v;
        }
        self.errors.extend(other.errors);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackfillReport {
    pub completed: Vec<String>,
    pub failed: Vec<String>,
    pub abandoned: Vec<String>,
    pub pipeline: PipelineRunReport,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CrawlCursor {
    first_start: Option<DateTime<Utc>>,
    next_start: Option<DateTime<Utc>>,
}

/// Payloads of one window with their collection times.
type Fetched = Vec<(Vec<u8>, DateTime<Utc>)>;

fn floor_day(t: DateTime<Utc>) -> DateTime<Utc> {
    t.date_naive().and_time(NaiveTime::MIN).and_utc()
}

/// Splits `[start, end)` into consecutive slices of at most `days` days.
pub fn chunk_window(start: DateTime<Utc>, end: DateTime<Utc>, days: u32) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    let step = Duration::days(i64::from(days.max(1)));
    let mut out = Vec::new();
    let mut s = start;
    while s < end {
        let e = (s + step).min(end);
        out.push((s, e));
        s = e;
    }
    out
}

/// The data directory layout under `storage.root`.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn raw(&self) -> PathBuf {
        self.root.join("raw")
    }
    pub fn unified(&self) -> PathBuf {
        self.root.join("unified")
    }
    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger")
    }
    pub fn index(&self) -> PathBuf {
        self.root.join("index")
    }
    pub fn seeds(&self) -> PathBuf {
        self.root.join("seeds.csv")
    }
    pub fn rules(&self) -> PathBuf {
        self.root.join("rules")
    }
    pub fn schedule(&self) -> PathBuf {
        self.root.join("schedule.json")
    }
}

/// Stable digest of the unified store contents; the saved index carries
/// the digest it was built from.
pub fn store_fingerprint(store: &UnifiedStore) -> String {
    let mut posts = store.posts();
    posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let mut h = Sha256::new();
    for p in &posts {
        h.update(serde_json::to_vec(p).expect("post serializes"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub struct Observatory {
    config: Config,
    layout: Layout,
    registry: Arc<SeedRegistry>,
    rules: Arc<RuleSet>,
    raw: Arc<RawStore>,
    store: Arc<UnifiedStore>,
    index: Arc<SearchIndex>,
    ledger: Arc<CrawlLedger>,
    metrics: Metrics,
    connector: Arc<dyn PlatformConnector>,
    clock: SharedClock,
    scheduler: Mutex<Scheduler>,
    cursors: Mutex<BTreeMap<Platform, CrawlCursor>>,
    interrupt: Mutex<Option<Interrupt>>,
    run_seq: AtomicU64,
    pool: rayon::ThreadPool,
}

impl Observatory {
    /// Opens (or creates) the data directory at `config.storage.root`.
    /// The connector is wrapped in the configured per-platform rate limits.
    pub fn open(config: Config, connector: Arc<dyn PlatformConnector>, clock: SharedClock) -> Result<Self, PipelineError> {
        config.validate().map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        let layout = Layout { root: config.storage.root.clone() };
        fs::create_dir_all(&layout.root)?;
        let registry = Arc::new(SeedRegistry::default());
        if layout.seeds().exists() {
            registry.import_path(&layout.seeds(), clock.now())?;
        }
        let rules = Arc::new(if layout.rules().is_dir() {
            RuleSet::load_dir(&layout.rules()).map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?
        } else {
            RuleSet::bundled()
        });
        let raw = Arc::new(RawStore::open(layout.raw())?);
        let store = Arc::new(UnifiedStore::open(&layout.unified())?);
        let ledger = Arc::new(CrawlLedger::open(&layout.ledger())?);
        let limited: Arc<dyn PlatformConnector> =
            Arc::new(RateLimitedConnector::new(connector, clock.clone(), &config.throttle_policies()));
        let (scheduler, cursors) = match fs::read(layout.schedule()) {
            Ok(bytes) => serde_json::from_slice::<(Scheduler, BTreeMap<Platform, CrawlCursor>)>(&bytes)
                .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?,
            Err(_) => (Scheduler::from_config(&config, floor_day(clock.now())), BTreeMap::new()),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.pipeline.parallelism.max(1))
            .build()
            .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        let run_seq = ledger.runs().iter().map(|r| r.run_id.clone()).collect::<BTreeSet<_>>().len() as u64;
        let dir = layout.index();
        let fresh = fs::read_to_string(dir.join("FINGERPRINT")).ok().as_deref() == Some(store_fingerprint(&store).as_str());
        let loaded = if fresh { SearchIndex::load(&dir, Arc::new(HashingEmbedder::default())).ok() } else { None };
        let rebuild = loaded.is_none();
        let obs = Self {
            index: Arc::new(loaded.unwrap_or_default()),
            config,
            layout,
            registry,
            rules,
            raw,
            store,
            ledger,
            metrics: Metrics::default(),
            connector: limited,
            clock,
            scheduler: Mutex::new(scheduler),
            cursors: Mutex::new(cursors),
            interrupt: Mutex::new(None),
            run_seq: AtomicU64::new(run_seq),
            pool,
        };
        if rebuild {
            obs.reindex()?;
        }
        Ok(obs)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }
    pub fn registry(&self) -> &Arc<SeedRegistry> {
        &self.registry
    }
    pub fn rules(&self) -> &Arc<RuleSet> {
        &self.rules
    }
    pub fn raw_store(&self) -> &Arc<RawStore> {
        &self.raw
    }
    pub fn store(&self) -> &Arc<UnifiedStore> {
        &self.store
    }
    pub fn index(&self) -> &Arc<SearchIndex> {
        &self.index
    }
    pub fn ledger(&self) -> &Arc<CrawlLedger> {
        &self.ledger
    }
    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }
    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }
    pub fn root(&self) -> &Path {
        &self.layout.root
    }

    pub fn set_interrupt(&self, i: Option<Interrupt>) {
        *self.interrupt.lock() = i;
    }

    /// Imports seed rows and persists the registry next to the data.
    pub fn import_seeds<R: std::io::Read>(&self, source: R) -> Result<LoadReport, PipelineError> {
        let report = self.registry.import_seeds(source, self.clock.now())?;
        self.save_seeds()?;
        Ok(report)
    }

    pub fn save_seeds(&self) -> Result<(), PipelineError> {
        let tmp = self.layout.seeds().with_extension("tmp");
        fs::write(&tmp, self.registry.export_string())?;
        fs::rename(tmp, self.layout.seeds())?;
        Ok(())
    }

    fn native_fields(&self, raw: &RawObject) -> Option<BTreeMap<String, String>> {
        self.rules.get(raw.platform).map(|r| project_text_fields(&raw.payload, r))
    }

    /// Rebuilds the whole index from the unified store and saves it.
    pub fn reindex(&self) -> Result<(), PipelineError> {
        self.index.clear();
        let items: Vec<(UnifiedPost, Option<BTreeMap<String, String>>)> = self
            .store
            .posts()
            .into_iter()
            .map(|p| {
                let fields = self.raw.get(&p.raw_ref).ok().and_then(|r| self.native_fields(&r));
                (p, fields)
            })
            .collect();
        self.pool.install(|| self.index.index_batch(items));
        self.save_index()
    }

    pub fn save_index(&self) -> Result<(), PipelineError> {
        let dir = self.layout.index();
        self.index.save(&dir).map_err(|e| PipelineError::Index(e.to_string()))?;
        fs::write(dir.join("FINGERPRINT"), store_fingerprint(&self.store))?;
        Ok(())
    }

    fn save_schedule(&self) -> Result<(), PipelineError> {
        let body = serde_json::to_vec_pretty(&(&*self.scheduler.lock(), &*self.cursors.lock()))
            .map_err(|e| PipelineError::Io(std::io::Error::other(e.to_string())))?;
        let tmp = self.layout.schedule().with_extension("tmp");
        fs::write(&tmp, body)?;
        fs::rename(tmp, self.layout.schedule())?;
        Ok(())
    }

    fn checkpoint(&self, handle_index: usize, chunk_index: usize, stage: Stage) -> Result<(), PipelineError> {
        let mut slot = self.interrupt.lock();
        if let Some(i) = *slot {
            if i.handle_index == handle_index && i.chunk_index == chunk_index && i.after == stage {
                *slot = None;
                tracing::warn!(?stage, handle_index, chunk_index, "pipeline interrupted");
                return Err(PipelineError::Interrupted { stage, handle_index, chunk_index });
            }
        }
        Ok(())
    }

    fn next_run_id(&self, platform: Platform) -> String {
        let n = self.run_seq.fetch_add(1, Ordering::SeqCst) + 1;
        format!("run-{n:06}-{platform}")
    }

    /// Fetches every page of one window, retrying transient failures with
    /// the platform's backoff policy.
    fn crawl(&self, platform: Platform, handle: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Fetched, ConnectorError> {
        let policy = self.config.throttle_policy(platform);
        let mut req = FetchRequest::new(platform, handle, start, end, self.config.pipeline.page_size);
        let mut out = Vec::new();
        loop {
            let mut attempt = 0;
            let page = loop {
                self.metrics.add("fetch_requests", 1);
                match self.connector.fetch(&req) {
                    Ok(p) => break p,
                    Err(e) if e.is_retryable() && attempt + 1 < policy.max_attempts => {
                        let mut wait = policy.backoff(attempt);
                        if let ConnectorError::Throttled { retry_after } = e {
                            self.metrics.add("throttled", 1);
                            wait = wait.max(retry_after);
                        }
                        self.metrics.add("fetch_retries", 1);
                        tracing::info!(%platform, handle, attempt, wait_ms = wait.as_millis() as u64, error = %e, "retrying fetch");
                        self.clock.sleep(wait);
                        attempt += 1;
                    }
                    Err(e) => return Err(e),
                }
            };
            let at = page.collected_at;
            out.extend(page.payloads.into_iter().map(|p| (p, at)));
            match page.next_cursor {
                Some(c) => req.cursor = Some(c),
                None => return Ok(out),
            }
        }
    }

    /// Runs the full pipeline for each handle over `[start, end)`.
    pub fn run_pipeline(&self, platform: Platform, handles: &[String], start: DateTime<Utc>, end: DateTime<Utc>) -> Result<PipelineRunReport, PipelineError> {
        self.run_kind(platform, handles, start, end, RunKind::Manual)
    }

    fn run_kind(&self, platform: Platform, handles: &[String], start: DateTime<Utc>, end: DateTime<Utc>, kind: RunKind) -> Result<PipelineRunReport, PipelineError> {
        if start >= end {
            return Err(PipelineError::BadWindow);
        }
        let mut report = PipelineRunReport::default();
        for (hi, handle) in handles.iter().enumerate() {
            let r = self.run_account(platform, handle, hi, start, end, kind)?;
            report.merge(r);
        }
        self.save_index()?;
        Ok(report)
    }

    fn run_account(
        &self,
        platform: Platform,
        handle: &str,
        handle_index: usize,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        kind: RunKind,
    ) -> Result<PipelineRunReport, PipelineError> {
        let run_id = self.next_run_id(platform);
        let started_at = self.clock.now();
        let chunks = chunk_window(start, end, self.config.pipeline.chunk_days);
        let mut report = PipelineRunReport::default();
        let mut covered: Vec<DayInterval> = Vec::new();
        let mut rc = RunCounts::default();
        let mut latest_post: Option<DateTime<Utc>> = None;
        tracing::info!(run_id, %platform, handle, %start, %end, ?kind, "run started");

        let record = |status: RunStatus, covered: &[DayInterval], rc: RunCounts, error: Option<String>| -> Result<(), PipelineError> {
            self.ledger.record_run(CrawlRun {
                run_id: run_id.clone(),
                platform,
                handle: handle.to_string(),
                window_start: start,
                window_end: end,
                status,
                covered: covered.to_vec(),
                counts: rc,
                started_at,
                finished_at: self.clock.now(),
                kind,
                error,
            })?;
            Ok(())
        };

        for (ci, &(cs, ce)) in chunks.iter().enumerate() {
            let mut c = StageCounts::default();
            let t = Instant::now();
            let fetched = match self.crawl(platform, handle, cs, ce) {
                Ok(f) => f,
                Err(e) => {
                    let status = if covered.is_empty() { RunStatus::Failed } else { RunStatus::Partial };
                    tracing::error!(run_id, %platform, handle, error = %e, ?status, "crawl failed");
                    record(status, &covered, rc, Some(e.to_string()))?;
                    self.metrics.add(if status == RunStatus::Failed { "runs_failed" } else { "runs_partial" }, 1);
                    report.errors.push(format!("{run_id} {platform}/{handle}: {e}"));
                    report.runs.push(AccountRun {
                        run_id: run_id.clone(),
                        platform,
                        handle: handle.to_string(),
                        status,
                        covered: covered.clone(),
                        counts: report.counts,
                        error: Some(e.to_string()),
                    });
                    return Ok(report);
                }
            };
            c.fetched = fetched.len() as u64;
            self.add_ms(&mut report, "crawl", t);
            self.metrics.add("fetched", c.fetched);
            self.checkpoint(handle_index, ci, Stage::Crawl)?;

            let t = Instant::now();
            let requests: Vec<PutRequest<'_>> = fetched
                .iter()
                .map(|(p, at)| PutRequest { platform, handle, payload: p, collected_at: *at, crawl_run_id: &run_id })
                .collect();
            let mut raws = Vec::with_capacity(fetched.len());
            for ((payload, at), res) in fetched.iter().zip(self.raw.put_batch(&requests)) {
                match res {
                    Ok(o) => {
                        c.stored += 1;
                        if o.deduplicated {
                            c.deduped += 1;
                        }
                        raws.push(RawObject {
                            object_id: o.object_id,
                            platform,
                            handle: handle.to_string(),
                            payload: payload.clone(),
                            collected_at: *at,
                            crawl_run_id: run_id.clone(),
                        });
                    }
                    Err(e) => {
                        c.rejected_invalid += 1;
                        tracing::warn!(run_id, error = %e, "raw payload rejected");
                    }
                }
            }
            self.add_ms(&mut report, "store", t);
            self.metrics.add("stored", c.stored);
            self.metrics.add("deduped", c.deduped);
            self.metrics.add("rejected_invalid", c.rejected_invalid);
            self.checkpoint(handle_index, ci, Stage::Store)?;

            let t = Instant::now();
            let outcomes: Vec<_> = {
                use rayon::prelude::*;
                self.pool.install(|| raws.par_iter().map(|r| normalize::normalize(r, &self.registry, &self.rules)).collect())
            };
            let pairs: Vec<(&RawObject, _)> = raws.iter().zip(outcomes).collect();
            let effects = self.store.apply_outcomes(&pairs, self.clock.now())?;
            let mut to_index: Vec<(String, usize)> = Vec::new();
            let mut withdrawn = Vec::new();
            for (i, ((raw, outcome), effect)) in pairs.iter().zip(&effects).enumerate() {
                match outcome {
                    Ok(p) => {
                        c.normalized += 1;
                        latest_post = latest_post.max(Some(p.published_at));
                        to_index.push((p.post_id.clone(), i));
                    }
                    Err(_) => {
                        c.quarantined += 1;
                        if *effect == ApplyEffect::Withdrawn {
                            if let Some(id) = raw_post_id(raw, &self.rules) {
                                withdrawn.push(id);
                            }
                        }
                    }
                }
            }
            self.add_ms(&mut report, "normalize", t);
            self.metrics.add("normalized", c.normalized);
            self.metrics.add("quarantined", c.quarantined);
            self.checkpoint(handle_index, ci, Stage::Normalize)?;

            let t = Instant::now();
            let mut items = Vec::with_capacity(to_index.len());
            for (post_id, i) in &to_index {
                // the store may hold a newer collection than this batch
                if let Some(current) = self.store.get(post_id) {
                    let raw = &pairs[*i].0;
                    let fields = if current.raw_ref == raw.object_id {
                        self.native_fields(raw)
                    } else {
                        self.raw.get(&current.raw_ref).ok().and_then(|r| self.native_fields(&r))
                    };
                    items.push((current, fields));
                }
            }
            for id in &withdrawn {
                if self.store.get(id).is_none() {
                    self.index.remove(id);
                }
            }
            c.indexed = items.len() as u64;
            c.embedded = items.len() as u64;
            self.pool.install(|| self.index.index_batch(items));
            self.add_ms(&mut report, "index", t);
            self.metrics.add("indexed", c.indexed);
            self.metrics.add("embedded", c.embedded);
            self.checkpoint(handle_index, ci, Stage::Index)?;

            rc.payloads += c.fetched;
            rc.deduped += c.deduped;
            rc.quarantined += c.quarantined;
            report.counts.add(&c);
            covered.push(DayInterval::within(cs, ce));
            covered = normalize_intervals(covered);
            let last = ci + 1 == chunks.len();
            record(if last { RunStatus::Success } else { RunStatus::Partial }, &covered, rc, None)?;
        }
        if let Some(t) = latest_post {
            self.registry.record_activity(platform, handle, t);
        }
        self.metrics.add("runs_success", 1);
        tracing::info!(run_id, %platform, handle, fetched = report.counts.fetched, normalized = report.counts.normalized,
            quarantined = report.counts.quarantined, "run finished");
        report.runs.push(AccountRun {
            run_id,
            platform,
            handle: handle.to_string(),
            status: RunStatus::Success,
            covered,
            counts: report.counts,
            error: None,
        });
        Ok(report)
    }

    fn add_ms(&self, report: &mut PipelineRunReport, stage: &str, since: Instant) {
        let ms = since.elapsed().as_millis() as u64;
        *report.durations_ms.entry(stage.to_string()).or_default() += ms;
        self.metrics.add("stage_ms_total", ms);
    }

    /// Gap intervals of one account inside `[start, end)`, at day
    /// granularity.
    pub fn detect_gaps(&self, platform: Platform, handle: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<DayInterval> {
        self.ledger.detect_gaps(platform, handle, DayInterval::covering(start, end))
    }

    /// Detects gaps for each handle and queues backfill tasks for them.
    pub fn plan_backfill(&self, platform: Platform, handles: &[String], start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Vec<BackfillTask>, PipelineError> {
        let now = self.clock.now();
        let mut tasks = Vec::new();
        for h in handles {
            let gaps = self.detect_gaps(platform, h, start, end);
            tasks.extend(self.ledger.emit_backfill(platform, h, &gaps, now)?);
        }
        Ok(tasks)
    }

    /// Consumes pending backfill tasks, highest priority first.
    pub fn run_backfills(&self, max_tasks: Option<usize>) -> Result<BackfillReport, PipelineError> {
        let mut out = BackfillReport::default();
        let mut done = 0;
        while max_tasks.is_none_or(|m| done < m) {
            let Some(task) = self.ledger.claim_next()? else { break };
            done += 1;
            let result = self.run_account(task.platform, &task.handle, 0, task.gap.start_time(), task.gap.end_time(), RunKind::Backfill);
            let report = match result {
                Ok(r) => r,
                Err(e) => {
                    self.ledger.fail(&task.task_id, &e.to_string())?;
                    return Err(e);
                }
            };
            let ok = report.runs.iter().all(|r| r.status == RunStatus::Success);
            if ok {
                self.ledger.complete(&task.task_id)?;
                self.metrics.add("backfills_completed", 1);
                out.completed.push(task.task_id.clone());
            } else {
                let err = report.errors.join("; ");
                let t = self.ledger.fail(&task.task_id, &err)?;
                self.metrics.add("backfills_failed", 1);
                if t.state == TaskState::Abandoned {
                    tracing::error!(task = %t.task_id, "backfill abandoned");
                    out.abandoned.push(t.task_id.clone());
                } else {
                    out.failed.push(t.task_id.clone());
                }
            }
            out.pipeline.merge(report);
        }
        self.save_index()?;
        Ok(out)
    }

    /// detect_gaps → emit_backfill → run the queue.
    pub fn recover(&self, platform: Platform, handles: &[String], start: DateTime<Utc>, end: DateTime<Utc>) -> Result<BackfillReport, PipelineError> {
        self.plan_backfill(platform, handles, start, end)?;
        self.run_backfills(None)
    }

    /// Re-derives unified posts from raw bytes and refreshes the index for
    /// every post that changed.
    pub fn renormalize(&self, filter: &PartitionFilter) -> Result<RenormalizeReport, PipelineError> {
        let report = normalize::renormalize(&self.raw, filter, &self.registry, &self.rules, &self.store, self.clock.now())?;
        for id in &report.changed {
            match self.store.get(id) {
                Some(p) => {
                    let fields = self.raw.get(&p.raw_ref).ok().and_then(|r| self.native_fields(&r));
                    self.index.index_post(&p, fields);
                }
                None => {
                    self.index.remove(id);
                }
            }
        }
        self.save_index()?;
        Ok(report)
    }

    /// Launches due jobs and runs them to completion. Returns launched ids.
    pub fn tick(&self, now: DateTime<Utc>) -> Result<Vec<String>, PipelineError> {
        let launched = self.scheduler.lock().tick(now);
        let mut result = Ok(());
        for job_id in &launched {
            let spec = self.scheduler.lock().spec(job_id).cloned();
            if let Some(spec) = spec {
                if result.is_ok() {
                    result = self.execute(&spec, now);
                }
            }
            self.scheduler.lock().finish(job_id);
        }
        self.save_schedule()?;
        result.map(|_| launched)
    }

    fn execute(&self, spec: &JobSpec, now: DateTime<Utc>) -> Result<(), PipelineError> {
        match spec.kind {
            JobKind::ScheduledCrawl => {
                let Some(platform) = spec.platform else { return Ok(()) };
                let end = floor_day(now);
                let lookback = Duration::days(i64::from(self.config.pipeline.initial_lookback_days));
                let start = {
                    let mut cursors = self.cursors.lock();
                    let c = cursors.entry(platform).or_default();
                    let s = c.next_start.unwrap_or(end - lookback);
                    c.first_start.get_or_insert(s);
                    s
                };
                if start >= end {
                    return Ok(());
                }
                let handles: Vec<String> = match &spec.handle {
                    Some(h) => vec![h.clone()],
                    None => self.registry.handles_on(platform).into_iter().map(|(_, h)| h).collect(),
                };
                self.run_kind(platform, &handles, start, end, RunKind::Scheduled)?;
                self.cursors.lock().entry(platform).or_default().next_start = Some(end);
            }
            JobKind::Backfill => {
                let windows: Vec<(Platform, DateTime<Utc>, DateTime<Utc>)> = self
                    .cursors
                    .lock()
                    .iter()
                    .filter_map(|(p, c)| Some((*p, c.first_start?, c.next_start?)))
                    .collect();
                for (p, s, e) in windows {
                    let handles: Vec<String> = self.registry.handles_on(p).into_iter().map(|(_, h)| h).collect();
                    self.plan_backfill(p, &handles, s, e)?;
                }
                self.run_backfills(None)?;
            }
            JobKind::Renormalize => {
                let filter = spec.platform.map(PartitionFilter::platform).unwrap_or_else(PartitionFilter::all);
                self.renormalize(&filter)?;
            }
            JobKind::Reindex => self.reindex()?,
            JobKind::StatsExport => {
                let table = crate::stats::table2(&self.store.posts());
                fs::write(self.layout.root.join("table2.txt"), table.render())?;
            }
        }
        Ok(())
    }

    pub fn scheduler_log(&self) -> Vec<Launch> {
        self.scheduler.lock().log().to_vec()
    }

    /// Counters plus gauges derived from the ledger, store and index.
    pub fn metrics_snapshot(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> = self.metrics.counters().into_iter().map(|(k, v)| (k, v as f64)).collect();
        m.insert("backfill_pending".into(), self.ledger.count_in_state(TaskState::Pending) as f64);
        m.insert("backfill_running".into(), self.ledger.count_in_state(TaskState::Running) as f64);
        m.insert("backfill_abandoned".into(), self.ledger.count_in_state(TaskState::Abandoned) as f64);
        m.insert("quarantine_count".into(), self.store.quarantine_count() as f64);
        m.insert("unified_posts".into(), self.store.len() as f64);
        m.insert("index_docs".into(), self.index.len() as f64);
        m.insert("raw_objects".into(), self.raw.total_count() as f64);
        m.insert("seeds".into(), self.registry.len() as f64);
        for (p, t) in self.ledger.last_success() {
            m.insert(format!("last_success_unix.{p}"), t.timestamp() as f64);
        }
        m
    }

    pub fn wait_hint(&self) -> StdDuration {
        StdDuration::from_secs(1)
    }
}
