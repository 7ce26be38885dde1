use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use meo_core::ledger::{
    complement, normalize_intervals, CrawlLedger, CrawlRun, DayInterval, LedgerError, RunCounts, RunKind, RunStatus, TaskState,
    MAX_BACKFILL_ATTEMPTS,
};
use meo_core::oracles::oracle_coverage;
use meo_core::platform::Platform;
use proptest::prelude::*;

fn base() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()
}

fn day(off: i64) -> NaiveDate {
    base() + Duration::days(off)
}

fn at(off: i64) -> DateTime<Utc> {
    day(off).and_hms_opt(0, 0, 0).unwrap().and_utc()
}

fn run(id: &str, handle: &str, s: i64, e: i64, status: RunStatus, covered: Vec<DayInterval>) -> CrawlRun {
    CrawlRun {
        run_id: id.into(),
        platform: Platform::Bluesky,
        handle: handle.into(),
        window_start: at(s),
        window_end: at(e),
        status,
        covered,
        counts: RunCounts::default(),
        started_at: at(e),
        finished_at: at(e),
        kind: RunKind::Scheduled,
        error: None,
    }
}

fn intervals() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((0i64..90, 0i64..25), 0..10).prop_map(|v| v.into_iter().map(|(s, l)| (s, s + l)).collect())
}

proptest! {
    #[test]
    fn complement_matches_day_sets(cov in intervals(), ts in -5i64..100, tl in 0i64..60) {
        let covered: Vec<DayInterval> = cov.iter().map(|(s, e)| DayInterval::new(day(*s), day(*e))).collect();
        let target = DayInterval::new(day(ts), day(ts + tl));
        let got: Vec<(NaiveDate, NaiveDate)> =
            complement(target, &normalize_intervals(covered)).into_iter().map(|g| (g.start, g.end)).collect();
        let pairs: Vec<(NaiveDate, NaiveDate)> = cov.iter().map(|(s, e)| (day(*s), day(*e))).collect();
        prop_assert_eq!(got, oracle_coverage((day(ts), day(ts + tl)), &pairs));
    }

    #[test]
    fn normalized_intervals_are_sorted_disjoint_and_stable(cov in intervals()) {
        let v: Vec<DayInterval> = cov.iter().map(|(s, e)| DayInterval::new(day(*s), day(*e))).collect();
        let n = normalize_intervals(v.clone());
        for w in n.windows(2) {
            prop_assert!(w[0].end < w[1].start);
        }
        prop_assert!(n.iter().all(|i| !i.is_empty()));
        prop_assert_eq!(normalize_intervals(n.clone()), n.clone());
        let days = |ivs: &[DayInterval]| {
            let mut set = std::collections::BTreeSet::new();
            for i in ivs {
                let mut d = i.start;
                while d < i.end {
                    set.insert(d);
                    d = d.succ_opt().unwrap();
                }
            }
            set
        };
        prop_assert_eq!(days(&v), days(&n));
    }

    #[test]
    fn covered_plus_gaps_is_the_window(cov in intervals(), ts in 0i64..60, tl in 1i64..60) {
        let ledger = CrawlLedger::in_memory();
        for (i, (s, e)) in cov.iter().enumerate() {
            if s < e {
                ledger.record_run(run(&format!("r{i}"), "acct", *s, *e, RunStatus::Success, vec![DayInterval::new(day(*s), day(*e))])).unwrap();
            }
        }
        let window = DayInterval::new(day(ts), day(ts + tl));
        let (covered, gaps) = ledger.conservation(Platform::Bluesky, "acct", window);
        prop_assert_eq!(covered + gaps, tl);
    }
}

#[test]
fn failed_runs_add_no_coverage() {
    let ledger = CrawlLedger::in_memory();
    ledger.record_run(run("a", "acct", 0, 10, RunStatus::Failed, vec![])).unwrap();
    assert!(ledger.coverage(Platform::Bluesky, "acct").is_empty());
    ledger.record_run(run("b", "acct", 0, 10, RunStatus::Partial, vec![DayInterval::new(day(0), day(4))])).unwrap();
    assert_eq!(ledger.detect_gaps(Platform::Bluesky, "acct", DayInterval::new(day(0), day(10))), vec![DayInterval::new(day(4), day(10))]);
}

#[test]
fn malformed_runs_are_rejected() {
    let ledger = CrawlLedger::in_memory();
    let outside = run("x", "acct", 0, 5, RunStatus::Success, vec![DayInterval::new(day(3), day(8))]);
    assert!(matches!(ledger.record_run(outside), Err(LedgerError::MalformedRun { .. })));
    let backwards = run("y", "acct", 5, 5, RunStatus::Success, vec![]);
    assert!(ledger.record_run(backwards).is_err());
    assert!(ledger.runs().is_empty());
}

#[test]
fn window_rounding() {
    let from = Utc.with_ymd_and_hms(2024, 1, 1, 6, 0, 0).unwrap();
    let to = Utc.with_ymd_and_hms(2024, 1, 3, 12, 0, 0).unwrap();
    assert_eq!(DayInterval::covering(from, to), DayInterval::new(day(0), day(3)));
    assert_eq!(DayInterval::within(from, to), DayInterval::new(day(1), day(2)));
    assert!(DayInterval::within(from, from + Duration::hours(3)).is_empty());
}

#[test]
fn backfill_queue_lifecycle() {
    let ledger = CrawlLedger::in_memory();
    let now = at(60);
    let gaps = [DayInterval::new(day(30), day(32)), DayInterval::new(day(5), day(9))];
    let tasks = ledger.emit_backfill(Platform::Bluesky, "acct", &gaps, now).unwrap();
    assert_eq!(tasks.len(), 2);
    // the same gaps are not queued twice
    assert!(ledger.emit_backfill(Platform::Bluesky, "ACCT", &gaps, now).unwrap().is_empty());

    // oldest gap first
    let first = ledger.claim_next().unwrap().unwrap();
    assert_eq!(first.gap, gaps[1]);
    assert!(matches!(ledger.complete(&tasks[0].task_id), Err(LedgerError::BadTransition { .. })));
    ledger.complete(&first.task_id).unwrap();

    let second = ledger.claim_next().unwrap().unwrap();
    for attempt in 1..=MAX_BACKFILL_ATTEMPTS {
        let t = ledger.fail(&second.task_id, "boom").unwrap();
        assert_eq!(t.attempts, attempt);
        if attempt < MAX_BACKFILL_ATTEMPTS {
            assert_eq!(t.state, TaskState::Pending);
            ledger.claim_next().unwrap().unwrap();
        } else {
            assert_eq!(t.state, TaskState::Abandoned);
        }
    }
    assert!(ledger.claim_next().unwrap().is_none());
    assert_eq!(ledger.count_in_state(TaskState::Done), 1);
    assert_eq!(ledger.count_in_state(TaskState::Abandoned), 1);
    // a terminal task no longer blocks re-emission
    assert_eq!(ledger.emit_backfill(Platform::Bluesky, "acct", &gaps[..1], now).unwrap().len(), 1);
    assert!(ledger.fail("bf-999999", "x").is_err());
}

#[test]
fn covered_gaps_are_not_queued() {
    let ledger = CrawlLedger::in_memory();
    ledger.record_run(run("a", "acct", 0, 10, RunStatus::Success, vec![DayInterval::new(day(0), day(10))])).unwrap();
    let out = ledger.emit_backfill(Platform::Bluesky, "acct", &[DayInterval::new(day(8), day(12))], at(20)).unwrap();
    assert!(out.is_empty());
}

#[test]
fn journal_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let ledger = CrawlLedger::open(dir.path()).unwrap();
        ledger.record_run(run("a", "acct", 0, 10, RunStatus::Success, vec![DayInterval::new(day(0), day(10))])).unwrap();
        ledger.record_run(run("b", "acct", 20, 30, RunStatus::Partial, vec![DayInterval::new(day(20), day(25))])).unwrap();
        ledger.emit_backfill(Platform::Bluesky, "acct", &[DayInterval::new(day(10), day(20))], at(40)).unwrap();
        let t = ledger.claim_next().unwrap().unwrap();
        ledger.fail(&t.task_id, "timeout").unwrap();
    }
    let ledger = CrawlLedger::open(dir.path()).unwrap();
    assert_eq!(ledger.runs().len(), 2);
    assert_eq!(
        ledger.coverage(Platform::Bluesky, "acct"),
        vec![DayInterval::new(day(0), day(10)), DayInterval::new(day(20), day(25))]
    );
    let tasks = ledger.tasks();
    assert_eq!(tasks.len(), 1);
    assert_eq!((tasks[0].state, tasks[0].attempts), (TaskState::Pending, 1));
    assert_eq!(tasks[0].last_error.as_deref(), Some("timeout"));
}
