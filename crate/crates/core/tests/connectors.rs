use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use meo_core::clock::{SharedClock, SimClock};
use meo_core::connectors::http::{HttpConnector, MockServer};
use meo_core::connectors::mock::{generate, MockFault};
use meo_core::connectors::{
    ConnectorError, FetchRequest, GenerateOptions, MockConnector, MockPlatformHub, PlatformConnector,
};
use meo_core::platform::Platform;
use proptest::prelude::*;

fn t(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

fn setup(platform: Platform, handles: &[&str], n: usize, seed: u64) -> (SharedClock, Arc<MockPlatformHub>) {
    let clock: SharedClock = Arc::new(SimClock::new(t(2025, 6, 1)));
    let hub = Arc::new(MockPlatformHub::new(clock.clone()));
    let handles: Vec<String> = handles.iter().map(|s| s.to_string()).collect();
    hub.load(generate(platform, &handles, n, seed, &GenerateOptions::default()).unwrap());
    (clock, hub)
}

fn drain(conn: &dyn PlatformConnector, mut req: FetchRequest) -> Result<Vec<Vec<Vec<u8>>>, ConnectorError> {
    let mut pages = Vec::new();
    loop {
        let page = conn.fetch(&req)?;
        pages.push(page.payloads);
        match page.next_cursor {
            Some(c) => req.cursor = Some(c),
            None => return Ok(pages),
        }
    }
}

#[test]
fn http_pagination_two_two_one() {
    let (clock, hub) = setup(Platform::Tiktok, &["creator"], 5, 11);
    let server = MockServer::start(hub).unwrap();
    let conn = HttpConnector::new(&server.base_url(), clock).unwrap();
    let pages = drain(&conn, FetchRequest::new(Platform::Tiktok, "creator", t(2024, 1, 1), t(2025, 1, 1), 2)).unwrap();
    assert_eq!(pages.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1]);
}

#[test]
fn http_matches_in_process_bytes() {
    let (clock, hub) = setup(Platform::Youtube, &["chan"], 7, 3);
    let server = MockServer::start(hub.clone()).unwrap();
    let http = HttpConnector::new(&server.base_url(), clock.clone()).unwrap();
    let local = MockConnector::new(hub, clock);
    let req = FetchRequest::new(Platform::Youtube, "chan", t(2024, 1, 1), t(2025, 1, 1), 3);
    let a = drain(&http, req.clone()).unwrap();
    let b = drain(&local, req.clone()).unwrap();
    let again = drain(&http, req).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, again);
}

#[test]
fn http_error_statuses() {
    let (clock, hub) = setup(Platform::XTwitter, &["acct"], 2, 1);
    let server = MockServer::start(hub.clone()).unwrap();
    let conn = HttpConnector::new(&server.base_url(), clock).unwrap();
    let req = FetchRequest::new(Platform::XTwitter, "nobody", t(2024, 1, 1), t(2025, 1, 1), 2);
    assert!(matches!(conn.fetch(&req), Err(ConnectorError::NotFound(_))));

    let req = FetchRequest::new(Platform::XTwitter, "acct", t(2024, 1, 1), t(2025, 1, 1), 2);
    hub.inject_fault(None, MockFault::Throttle(Duration::from_secs(5)), 1);
    assert_eq!(conn.fetch(&req), Err(ConnectorError::Throttled { retry_after: Duration::from_secs(5) }));
    hub.inject_fault(None, MockFault::Transient, 1);
    assert!(matches!(conn.fetch(&req), Err(ConnectorError::Retryable(_))));
    assert_eq!(conn.fetch(&req).unwrap().payloads.len(), 2);
}

#[test]
fn server_side_rate_limit_throttles() {
    let clock: SharedClock = Arc::new(SimClock::new(t(2025, 6, 1)));
    let hub = Arc::new(MockPlatformHub::new(clock.clone()).with_rate_limit(2));
    hub.load(generate(Platform::Bluesky, &["a".into()], 1, 1, &GenerateOptions::default()).unwrap());
    let conn = MockConnector::new(hub, clock);
    let req = FetchRequest::new(Platform::Bluesky, "a", t(2024, 1, 1), t(2025, 1, 1), 5);
    assert!(conn.fetch(&req).is_ok());
    assert!(conn.fetch(&req).is_ok());
    assert!(matches!(conn.fetch(&req), Err(ConnectorError::Throttled { .. })));
}

#[test]
fn posts_after_now_are_not_served() {
    let clock: SharedClock = Arc::new(SimClock::new(t(2024, 7, 1)));
    let hub = Arc::new(MockPlatformHub::new(clock.clone()));
    hub.load(generate(Platform::Telegram, &["ch".into()], 50, 9, &GenerateOptions::default()).unwrap());
    let conn = MockConnector::new(hub.clone(), clock);
    let pages = drain(&conn, FetchRequest::new(Platform::Telegram, "ch", t(2024, 1, 1), t(2025, 1, 1), 100)).unwrap();
    let served: usize = pages.iter().map(Vec::len).sum();
    assert_eq!(served, hub.docs_in_window(Platform::Telegram, "ch", t(2024, 1, 1), t(2024, 7, 1)).len());
    assert!(served < 50);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn union_of_pages_equals_window(n in 0usize..40, page in 1usize..9, seed in 0u64..1000, a in 0i64..300, len in 1i64..200) {
        let (clock, hub) = setup(Platform::Instagram, &["acct"], n, seed);
        let conn = MockConnector::new(hub.clone(), clock);
        let start = t(2024, 1, 1) + chrono::Duration::days(a);
        let end = start + chrono::Duration::days(len);
        let pages = drain(&conn, FetchRequest::new(Platform::Instagram, "acct", start, end, page)).unwrap();
        let all: Vec<Vec<u8>> = pages.into_iter().flatten().collect();
        let unique: BTreeSet<&Vec<u8>> = all.iter().collect();
        prop_assert_eq!(unique.len(), all.len());
        let truth: BTreeSet<Vec<u8>> = hub
            .docs_in_window(Platform::Instagram, "acct", start, end)
            .into_iter()
            .map(|d| d.payload.to_vec())
            .collect();
        prop_assert_eq!(unique.into_iter().cloned().collect::<BTreeSet<_>>(), truth);
    }
}
