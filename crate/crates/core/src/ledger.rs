//! Crawl history: run journal, per-account day coverage, gap detection and
//! the backfill task queue.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::platform::Platform;

pub const MAX_BACKFILL_ATTEMPTS: u32 = 5;

/// Half-open range of UTC calendar days `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DayInterval {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days().max(0)
    }

    /// Smallest day range containing `[from, to)`.
    pub fn covering(from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        let end = if to.time() == NaiveTime::MIN { to.date_naive() } else { to.date_naive().succ_opt().expect("date in range") };
        Self { start: from.date_naive(), end }
    }

    /// Largest day range fully inside `[from, to)`.
    pub fn within(from: DateTime<Utc>, to: DateTime<Utc>) -> Self {
        let start = if from.time() == NaiveTime::MIN { from.date_naive() } else { from.date_naive().succ_opt().expect("date in range") };
        let iv = Self { start, end: to.date_naive() };
        if iv.is_empty() {
            Self { start, end: start }
        } else {
            iv
        }
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start.and_time(NaiveTime::MIN).and_utc()
    }

    pub fn end_time(&self) -> DateTime<Utc> {
        self.end.and_time(NaiveTime::MIN).and_utc()
    }

    pub fn intersects(&self, other: &DayInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &DayInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl std::fmt::Display for DayInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Sorts and merges overlapping or adjacent intervals, dropping empty ones.
pub fn normalize_intervals(mut v: Vec<DayInterval>) -> Vec<DayInterval> {
    v.retain(|i| !i.is_empty());
    v.sort();
    let mut out: Vec<DayInterval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// `target \ covered`, with `covered` already normalized.
pub fn complement(target: DayInterval, covered: &[DayInterval]) -> Vec<DayInterval> {
    let mut gaps = Vec::new();
    let mut cursor = target.start;
    for c in covered {
        if c.end <= cursor {
            continue;
        }
        if c.start >= target.end {
            break;
        }
        if c.start > cursor {
            gaps.push(DayInterval::new(cursor, c.start.min(target.end)));
        }
        cursor = cursor.max(c.end);
        if cursor >= target.end {
            break;
        }
    }
    if cursor < target.end {
        gaps.push(DayInterval::new(cursor, target.end));
    }
    gaps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    #[default]
    Scheduled,
    Backfill,
    Manual,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub payloads: u64,
    pub deduped: u64,
    pub quarantined: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlRun {
    pub run_id: String,
    pub platform: Platform,
    pub handle: String,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub status: RunStatus,
    pub covered: Vec<DayInterval>,
    pub counts: RunCounts,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    #[serde(default)]
    pub kind: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CrawlRun {
    pub fn validate(&self) -> Result<(), LedgerError> {
        let malformed = |why: &str| Err(LedgerError::MalformedRun { run_id: self.run_id.clone(), reason: why.to_string() });
        if self.window_start >= self.window_end {
            return malformed("empty requested window");
        }
        let window = DayInterval::covering(self.window_start, self.window_end);
        for (i, c) in self.covered.iter().enumerate() {
            if c.is_empty() {
                return malformed("empty covered interval");
            }
            if !window.contains(c) {
                return malformed("covered interval outside requested window");
            }
            if i > 0 && self.covered[i - 1].end > c.start {
                return malformed("covered intervals overlap or are unsorted");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Running,
    Done,
    Abandoned,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Done | TaskState::Abandoned)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackfillTask {
    pub task_id: String,
    pub platform: Platform,
    pub handle: String,
    pub gap: DayInterval,
    /// Age of the gap start in days; larger runs first.
    pub priority: i64,
    pub attempts: u32,
    pub state: TaskState,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("malformed run {run_id}: {reason}")]
    MalformedRun { run_id: String, reason: String },
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task {task_id} is {state:?}, expected {expected:?}")]
    BadTransition { task_id: String, state: TaskState, expected: TaskState },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

type Key = (Platform, String);

fn key(platform: Platform, handle: &str) -> Key {
    (platform, handle.to_lowercase())
}

/// Per-account normalized day intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageMap {
    map: BTreeMap<Key, Vec<DayInterval>>,
}

impl CoverageMap {
    pub fn insert(&mut self, platform: Platform, handle: &str, intervals: &[DayInterval]) {
        let slot = self.map.entry(key(platform, handle)).or_default();
        let mut all = std::mem::take(slot);
        all.extend_from_slice(intervals);
        *slot = normalize_intervals(all);
    }

    pub fn get(&self, platform: Platform, handle: &str) -> &[DayInterval] {
        self.map.get(&key(platform, handle)).map_or(&[], Vec::as_slice)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Key, &Vec<DayInterval>)> {
        self.map.iter()
    }

    /// Covered days of one account inside `window`.
    pub fn covered_days_in(&self, platform: Platform, handle: &str, window: DayInterval) -> i64 {
        self.get(platform, handle)
            .iter()
            .map(|c| DayInterval::new(c.start.max(window.start), c.end.min(window.end)).days())
            .sum()
    }
}

#[derive(Default)]
struct Inner {
    runs: Vec<CrawlRun>,
    coverage: CoverageMap,
    tasks: BTreeMap<String, BackfillTask>,
    next_task: u64,
}

/// Append-only run and task journals with an in-memory fold.
pub struct CrawlLedger {
    root: Option<PathBuf>,
    inner: RwLock<Inner>,
    io: Mutex<()>,
}

fn read_ndjson<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LedgerError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let lines: Vec<String> = BufReader::new(f).lines().collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            // a crash can leave a torn final line
            Err(_) if i == last => tracing::warn!(path = %path.display(), "ignoring torn journal line"),
            Err(e) => return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1)).into()),
        }
    }
    Ok(out)
}

impl Default for CrawlLedger {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl CrawlLedger {
    pub fn in_memory() -> Self {
        Self { root: None, inner: RwLock::new(Inner::default()), io: Mutex::new(()) }
    }

    /// Opens `root/runs.ndjson` and `root/tasks.ndjson`, folding them into
    /// coverage and task state.
    pub fn open(root: &Path) -> Result<Self, LedgerError> {
        fs::create_dir_all(root)?;
        let mut inner = Inner::default();
        for run in read_ndjson::<CrawlRun>(&root.join("runs.ndjson"))? {
            if run.status != RunStatus::Failed {
                inner.coverage.insert(run.platform, &run.handle, &run.covered);
            }
            inner.runs.push(run);
        }
        for task in read_ndjson::<BackfillTask>(&root.join("tasks.ndjson"))? {
            if let Some(n) = task.task_id.strip_prefix("bf-").and_then(|n| n.parse::<u64>().ok()) {
                inner.next_task = inner.next_task.max(n + 1);
            }
            inner.tasks.insert(task.task_id.clone(), task);
        }
        // a task caught mid-run by a crash goes back to the queue
        for t in inner.tasks.values_mut() {
            if t.state == TaskState::Running {
                t.state = TaskState::Pending;
            }
        }
        Ok(Self { root: Some(root.to_path_buf()), inner: RwLock::new(inner), io: Mutex::new(()) })
    }

    fn append<T: Serialize>(&self, file: &str, items: &[T]) -> Result<(), LedgerError> {
        let Some(root) = &self.root else { return Ok(()) };
        if items.is_empty() {
            return Ok(());
        }
        let _guard = self.io.lock();
        let mut buf = Vec::new();
        for it in items {
            serde_json::to_writer(&mut buf, it).map_err(io::Error::other)?;
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(root.join(file))?;
        f.write_all(&buf)?;
        f.sync_data()?;
        Ok(())
    }

    /// Journals the run and folds its covered intervals into coverage.
    /// Failed runs are journaled but add no coverage.
    pub fn record_run(&self, run: CrawlRun) -> Result<Vec<DayInterval>, LedgerError> {
        run.validate()?;
        self.append("runs.ndjson", std::slice::from_ref(&run))?;
        let mut inner = self.inner.write();
        if run.status != RunStatus::Failed {
            inner.coverage.insert(run.platform, &run.handle, &run.covered);
        }
        let cov = inner.coverage.get(run.platform, &run.handle).to_vec();
        inner.runs.push(run);
        Ok(cov)
    }

    pub fn coverage(&self, platform: Platform, handle: &str) -> Vec<DayInterval> {
        self.inner.read().coverage.get(platform, handle).to_vec()
    }

    pub fn coverage_map(&self) -> CoverageMap {
        self.inner.read().coverage.clone()
    }

    pub fn runs(&self) -> Vec<CrawlRun> {
        self.inner.read().runs.clone()
    }

    pub fn detect_gaps(&self, platform: Platform, handle: &str, target: DayInterval) -> Vec<DayInterval> {
        if target.is_empty() {
            return Vec::new();
        }
        complement(target, self.inner.read().coverage.get(platform, handle))
    }

    /// One pending task per gap. Gaps already queued (pending or running)
    /// or now intersecting coverage are skipped.
    pub fn emit_backfill(
        &self,
        platform: Platform,
        handle: &str,
        gaps: &[DayInterval],
        now: DateTime<Utc>,
    ) -> Result<Vec<BackfillTask>, LedgerError> {
        let mut created = Vec::new();
        {
            let mut inner = self.inner.write();
            let handle_key = handle.to_lowercase();
            for gap in gaps {
                if gap.is_empty() {
                    continue;
                }
                let queued = inner.tasks.values().any(|t| {
                    !t.state.is_terminal() && t.platform == platform && t.handle.to_lowercase() == handle_key && t.gap == *gap
                });
                let covered = inner.coverage.get(platform, handle).iter().any(|c| c.intersects(gap));
                if queued || covered {
                    continue;
                }
                let task = BackfillTask {
                    task_id: format!("bf-{:06}", inner.next_task),
                    platform,
                    handle: handle.to_string(),
                    gap: *gap,
                    priority: (now.date_naive() - gap.start).num_days(),
                    attempts: 0,
                    state: TaskState::Pending,
                    created_at: now,
                    last_error: None,
                };
                inner.next_task += 1;
                inner.tasks.insert(task.task_id.clone(), task.clone());
                created.push(task);
            }
        }
        self.append("tasks.ndjson", &created)?;
        Ok(created)
    }

    pub fn tasks(&self) -> Vec<BackfillTask> {
        self.inner.read().tasks.values().cloned().collect()
    }

    pub fn task(&self, task_id: &str) -> Option<BackfillTask> {
        self.inner.read().tasks.get(task_id).cloned()
    }

    pub fn count_in_state(&self, state: TaskState) -> usize {
        self.inner.read().tasks.values().filter(|t| t.state == state).count()
    }

    /// Moves the highest-priority pending task to running. Ties go to the
    /// lowest task id.
    pub fn claim_next(&self) -> Result<Option<BackfillTask>, LedgerError> {
        let claimed = {
            let mut inner = self.inner.write();
            let next = inner
                .tasks
                .values()
                .filter(|t| t.state == TaskState::Pending)
                .max_by(|a, b| a.priority.cmp(&b.priority).then_with(|| b.task_id.cmp(&a.task_id)))
                .map(|t| t.task_id.clone());
            next.map(|id| {
                let t = inner.tasks.get_mut(&id).expect("present");
                t.state = TaskState::Running;
                t.clone()
            })
        };
        if let Some(t) = &claimed {
            self.append("tasks.ndjson", std::slice::from_ref(t))?;
        }
        Ok(claimed)
    }

    pub fn complete(&self, task_id: &str) -> Result<BackfillTask, LedgerError> {
        self.transition(task_id, |t| {
            t.state = TaskState::Done;
            t.last_error = None;
        })
    }

    /// Records a failed attempt; after the limit the task is abandoned.
    pub fn fail(&self, task_id: &str, error: &str) -> Result<BackfillTask, LedgerError> {
        self.transition(task_id, |t| {
            t.attempts += 1;
            t.last_error = Some(error.to_string());
            t.state = if t.attempts >= MAX_BACKFILL_ATTEMPTS { TaskState::Abandoned } else { TaskState::Pending };
        })
    }

    fn transition(&self, task_id: &str, f: impl FnOnce(&mut BackfillTask)) -> Result<BackfillTask, LedgerError> {
        let updated = {
            let mut inner = self.inner.write();
            let t = inner.tasks.get_mut(task_id).ok_or_else(|| LedgerError::UnknownTask(task_id.to_string()))?;
            if t.state != TaskState::Running {
                return Err(LedgerError::BadTransition {
                    task_id: task_id.to_string(),
                    state: t.state,
                    expected: TaskState::Running,
                });
            }
            f(t);
            t.clone()
        };
        self.append("tasks.ndjson", std::slice::from_ref(&updated))?;
        Ok(updated)
    }

    /// Per-account day counts for a window: (covered, gap).
    pub fn conservation(&self, platform: Platform, handle: &str, window: DayInterval) -> (i64, i64) {
        let covered = self.inner.read().coverage.covered_days_in(platform, handle, window);
        let gaps: i64 = self.detect_gaps(platform, handle, window).iter().map(DayInterval::days).sum();
        (covered, gaps)
    }

    /// Most recent successful run end per platform.
    pub fn last_success(&self) -> HashMap<Platform, DateTime<Utc>> {
        let mut out: HashMap<Platform, DateTime<Utc>> = HashMap::new();
        for r in self.inner.read().runs.iter().filter(|r| r.status == RunStatus::Success) {
            let slot = out.entry(r.platform).or_insert(r.finished_at);
            *slot = (*slot).max(r.finished_at);
        }
        out
    }
}
