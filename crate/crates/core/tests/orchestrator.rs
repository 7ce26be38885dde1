use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use meo_core::clock::{Clock, SharedClock, SimClock};
use meo_core::config::Config;
use meo_core::connectors::{MockConnector, MockPlatformHub, PlatformConnector};
use meo_core::fixtures::{build_scenario, GapEffect, PostsPerSeed, Scenario, ScenarioSpec};
use meo_core::ledger::{DayInterval, RunStatus, TaskState, MAX_BACKFILL_ATTEMPTS};
use meo_core::orchestrator::{Interrupt, Observatory, PipelineError, Scheduler, Stage};
use meo_core::platform::{MainType, Platform};

fn t(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

fn spec(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        rng_seed: seed,
        platforms: vec![Platform::Tiktok],
        seeds_per_type: [(MainType::News, 2), (MainType::Politician, 2)].into_iter().collect(),
        posts_per_seed: PostsPerSeed { min: 20, max: 40 },
        start: t(2024, 1, 1),
        end: t(2024, 2, 1),
        bad_timestamps: 4,
        interactions: true,
        ..Default::default()
    }
}

struct Env {
    _dir: tempfile::TempDir,
    obs: Observatory,
    hub: Arc<MockPlatformHub>,
    clock: Arc<SimClock>,
}

fn env_at(dir: tempfile::TempDir, scenario: &Scenario) -> Env {
    let clock = Arc::new(SimClock::new(t(2024, 3, 1)));
    let shared: SharedClock = clock.clone();
    let hub = scenario.hub(shared.clone());
    let mut cfg = Config::default();
    cfg.storage.root = dir.path().to_path_buf();
    cfg.pipeline.page_size = 7;
    let conn: Arc<dyn PlatformConnector> = Arc::new(MockConnector::new(hub.clone(), shared.clone()));
    let obs = Observatory::open(cfg, conn, shared).unwrap();
    if obs.registry().is_empty() {
        obs.import_seeds(scenario.seeds_csv.as_bytes()).unwrap();
    }
    Env { _dir: dir, obs, hub, clock }
}

fn env(scenario: &Scenario) -> Env {
    env_at(tempfile::tempdir().unwrap(), scenario)
}

/// Unified store as sorted JSON lines without collected_at.
fn store_image(obs: &Observatory) -> Vec<String> {
    let mut posts = obs.store().posts();
    posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    posts
        .into_iter()
        .map(|p| {
            let mut v = serde_json::to_value(&p).unwrap();
            v.as_object_mut().unwrap().remove("collected_at");
            v.to_string()
        })
        .collect()
}

#[test]
fn stage_counts_are_conserved() {
    let s = build_scenario(&spec(3)).unwrap();
    let e = env(&s);
    let handles = s.handles();
    let r = e.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap();
    assert!(r.counts.is_conserved(), "{:?}", r.counts);
    assert_eq!(r.counts.fetched as usize, s.expected.total_docs);
    assert_eq!(r.counts.quarantined as usize, s.expected.bad_timestamp_docs);
    assert_eq!(e.obs.store().len() + s.expected.bad_timestamp_docs, s.expected.total_docs);
    assert_eq!(e.obs.index().len(), e.obs.store().len());
    assert!(r.runs.iter().all(|r| r.status == RunStatus::Success));
    for h in &handles {
        assert!(e.obs.detect_gaps(Platform::Tiktok, h, s.spec.start, s.spec.end).is_empty());
    }
    let m = e.obs.metrics_snapshot();
    assert_eq!(m["fetched"] as usize, s.expected.total_docs);
    assert_eq!(m["quarantine_count"] as usize, s.expected.bad_timestamp_docs);
    assert_eq!(m["backfill_pending"], 0.0);
    assert!(m.contains_key("last_success_unix.tiktok"));
    e.obs.index().consistency_check().unwrap();
}

#[test]
fn rerun_is_idempotent() {
    let s = build_scenario(&spec(4)).unwrap();
    let e = env(&s);
    let handles = s.handles();
    e.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap();
    let first = store_image(&e.obs);
    let raw = e.obs.raw_store().total_count();
    // same collection day: every payload deduplicates
    let r = e.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap();
    assert_eq!(r.counts.deduped, r.counts.stored);
    assert_eq!(store_image(&e.obs), first);
    assert_eq!(e.obs.raw_store().total_count(), raw);
    // next day lands in new partitions; the unified view does not change
    e.clock.advance(Duration::days(1));
    let r = e.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap();
    assert_eq!(r.counts.deduped, 0);
    assert_eq!(store_image(&e.obs), first);
    assert_eq!(e.obs.raw_store().total_count(), 2 * raw);
}

#[test]
fn interrupted_runs_recover_to_the_same_store() {
    let s = build_scenario(&spec(5)).unwrap();
    let handles = s.handles();
    let reference = env(&s);
    reference.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap();
    let want = store_image(&reference.obs);
    for stage in Stage::ALL {
        let e = env(&s);
        e.obs.set_interrupt(Some(Interrupt { handle_index: 1, chunk_index: 2, after: stage }));
        let err = e.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap_err();
        assert!(matches!(err, PipelineError::Interrupted { .. }), "{err}");
        let gaps = e.obs.detect_gaps(Platform::Tiktok, &handles[1], s.spec.start, s.spec.end);
        assert_eq!(gaps, vec![DayInterval::new(NaiveDate::from_ymd_opt(2024, 1, 15).unwrap(), NaiveDate::from_ymd_opt(2024, 2, 1).unwrap())]);
        e.obs.recover(Platform::Tiktok, &handles, s.spec.start, s.spec.end).unwrap();
        for h in &handles {
            assert!(e.obs.detect_gaps(Platform::Tiktok, h, s.spec.start, s.spec.end).is_empty(), "{stage:?} {h}");
        }
        assert_eq!(store_image(&e.obs), want, "{stage:?}");
        assert_eq!(e.obs.index().len(), e.obs.store().len());
    }
}

#[test]
fn reopen_restores_state() {
    let s = build_scenario(&spec(6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    let e = env_at(dir, &s);
    let handles = s.handles();
    e.obs.run_pipeline(Platform::Tiktok, &handles, s.spec.start, t(2024, 1, 20)).unwrap();
    let image = store_image(&e.obs);
    let hits = e.obs.index().search_lexical("election budget", &Default::default(), 20).unwrap();
    let Env { _dir, obs, .. } = e;
    drop(obs);
    let again = env_at(_dir, &s);
    assert_eq!(again.obs.root(), path);
    assert_eq!(again.obs.registry().len(), 4);
    assert_eq!(store_image(&again.obs), image);
    assert_eq!(again.obs.index().search_lexical("election budget", &Default::default(), 20).unwrap(), hits);
    let gaps = again.obs.detect_gaps(Platform::Tiktok, &handles[0], s.spec.start, s.spec.end);
    assert_eq!(gaps, vec![DayInterval::new(NaiveDate::from_ymd_opt(2024, 1, 20).unwrap(), NaiveDate::from_ymd_opt(2024, 2, 1).unwrap())]);
}

#[test]
fn planted_gap_is_detected_and_filled() {
    let mut sp = spec(7);
    sp.gaps.push(GapEffect {
        platform: Platform::Tiktok,
        handle: "news_001".into(),
        start: NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(),
        end: NaiveDate::from_ymd_opt(2024, 1, 9).unwrap(),
    });
    let s = build_scenario(&sp).unwrap();
    let e = env(&s);
    for w in s.crawl_plan() {
        e.obs.run_pipeline(w.platform, &[w.handle], w.start, w.end).unwrap();
    }
    let gaps = e.obs.detect_gaps(Platform::Tiktok, "news_001", s.spec.start, s.spec.end);
    let g = &s.expected.gaps[0];
    assert_eq!(gaps, vec![DayInterval::new(g.start, g.end)]);
    let before = e.obs.store().len();
    let report = e.obs.recover(Platform::Tiktok, &s.handles(), s.spec.start, s.spec.end).unwrap();
    assert_eq!(report.completed.len(), 1);
    let in_gap = e.hub.docs_in_window(Platform::Tiktok, "news_001", DayInterval::new(g.start, g.end).start_time(), DayInterval::new(g.start, g.end).end_time());
    assert_eq!(e.obs.store().len() + report.pipeline.counts.quarantined as usize, before + in_gap.len());
    assert!(e.obs.detect_gaps(Platform::Tiktok, "news_001", s.spec.start, s.spec.end).is_empty());
}

#[test]
fn failing_backfill_is_abandoned() {
    let s = build_scenario(&spec(8)).unwrap();
    let e = env(&s);
    e.hub.break_account(Platform::Tiktok, "news_000");
    let r = e.obs.run_pipeline(Platform::Tiktok, &["news_000".to_string()], s.spec.start, s.spec.end).unwrap();
    assert_eq!(r.runs[0].status, RunStatus::Failed);
    e.obs.plan_backfill(Platform::Tiktok, &["news_000".to_string()], s.spec.start, s.spec.end).unwrap();
    let mut abandoned = 0;
    for _ in 0..MAX_BACKFILL_ATTEMPTS + 2 {
        let rep = e.obs.run_backfills(None).unwrap();
        abandoned += rep.abandoned.len();
    }
    assert_eq!(abandoned, 1);
    assert_eq!(e.obs.ledger().count_in_state(TaskState::Abandoned), 1);
    let task = &e.obs.ledger().tasks()[0];
    assert_eq!(task.attempts, MAX_BACKFILL_ATTEMPTS);
    assert_eq!(e.obs.metrics_snapshot()["backfill_abandoned"], 1.0);
}

#[test]
fn throttling_and_transient_errors_are_retried() {
    let s = build_scenario(&spec(9)).unwrap();
    let e = env(&s);
    e.hub.inject_fault(None, meo_core::connectors::mock::MockFault::Transient, 3);
    e.hub.inject_fault(None, meo_core::connectors::mock::MockFault::Throttle(std::time::Duration::from_secs(30)), 2);
    let before = e.clock.now();
    let r = e.obs.run_pipeline(Platform::Tiktok, &s.handles(), s.spec.start, s.spec.end).unwrap();
    assert!(r.runs.iter().all(|r| r.status == RunStatus::Success));
    assert_eq!(r.counts.fetched as usize, s.expected.total_docs);
    let m = e.obs.metrics();
    assert_eq!(m.get("fetch_retries"), 5);
    assert_eq!(m.get("throttled"), 2);
    assert!(e.clock.now() - before >= Duration::seconds(60));
}

/// Launch count per job over 30 days of hourly ticks versus the calendar.
#[test]
fn scheduler_matches_calendar() {
    let anchor = t(2025, 1, 1);
    let cfg = Config::default();
    let mut s = Scheduler::from_config(&cfg, anchor);
    let mut launches: BTreeMap<String, Vec<DateTime<Utc>>> = BTreeMap::new();
    for h in 0..24 * 30 {
        let now = anchor + Duration::hours(h);
        for id in s.tick(now) {
            launches.entry(id.clone()).or_default().push(now);
            s.finish(&id);
        }
    }
    for (p, pc) in &cfg.platforms {
        let id = format!("crawl:{p}");
        if !pc.enabled {
            assert!(!launches.contains_key(&id));
            continue;
        }
        let c = i64::from(pc.cadence_hours);
        let expected: Vec<_> = (0..).map(|k| anchor + Duration::hours(k * c)).take_while(|x| *x < anchor + Duration::days(30)).collect();
        assert_eq!(launches[&id], expected, "{id}");
    }
    assert_eq!(launches["crawl:x_twitter"].len(), 9);
    assert_eq!(launches["backfill"].len(), 30);
}

#[test]
fn ticks_crawl_every_enabled_platform() {
    let mut sp = spec(10);
    sp.platforms = vec![Platform::Tiktok, Platform::Youtube];
    sp.start = t(2024, 12, 1);
    sp.end = t(2025, 1, 1);
    let s = build_scenario(&sp).unwrap();
    let e = env(&s);
    e.clock.set(t(2025, 1, 1));
    let launched = e.obs.tick(t(2025, 1, 1)).unwrap();
    assert!(launched.contains(&"crawl:tiktok".to_string()));
    assert!(launched.contains(&"crawl:youtube".to_string()));
    let target = DayInterval::new(NaiveDate::from_ymd_opt(2024, 12, 2).unwrap(), NaiveDate::from_ymd_opt(2025, 1, 1).unwrap());
    for h in s.handles() {
        assert!(e.obs.ledger().detect_gaps(Platform::Youtube, &h, target).is_empty());
    }
    // a second tick at the same instant launches nothing
    assert!(e.obs.tick(t(2025, 1, 1)).unwrap().is_empty());
    e.clock.set(t(2025, 1, 2));
    let next = e.obs.tick(t(2025, 1, 2)).unwrap();
    assert!(next.contains(&"crawl:youtube".to_string()));
    assert!(!next.contains(&"crawl:tiktok".to_string()));
}
