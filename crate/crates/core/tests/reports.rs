use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use meo_core::normalize::{Engagement, SeedMeta, UnifiedPost};
use meo_core::platform::{MainType, Platform};
use meo_core::seeds::{DistributionReport, SeedRegistry};
use meo_core::stats::{self, StatsCell, CSV_COLUMNS, DASH};
use proptest::prelude::*;

fn golden(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/tables").join(rel)
}

fn post(i: usize, platform: Platform, main_type: MainType, seed: &str, hours: i64) -> UnifiedPost {
    let base = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    UnifiedPost {
        post_id: format!("{platform}:{i}"),
        platform,
        seed_id: seed.into(),
        handle: seed.into(),
        text: format!("post, number \"{i}\"\nsecond line"),
        published_at: base + Duration::hours(hours),
        collected_at: base + Duration::days(40),
        engagement: Engagement { likes: Some(i as u64), shares: None, comments: Some(0), views: None },
        media_links: vec!["https://m.example/1".into(), "https://m.example/2".into()],
        mentions: vec!["ann".into()],
        shared_from: None,
        seed_meta: SeedMeta { main_type, sub_type: None, federal_party: None, province: None, collection_tags: BTreeSet::new() },
        raw_ref: format!("r{i}"),
        schema_version: 1,
    }
}

#[test]
fn table1_golden() {
    let reg = SeedRegistry::default();
    reg.import_path(&golden("table1_seeds.csv"), Utc::now()).unwrap();
    let want = std::fs::read_to_string(golden("table1.txt")).unwrap();
    assert_eq!(reg.distribution_report().render(), want);
}

#[test]
fn table2_golden() {
    let mut rdr = csv::Reader::from_path(golden("table2_posts.csv")).unwrap();
    let mut posts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (p, t): (Platform, MainType) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
        for _ in 0..rec[3].parse::<usize>().unwrap() {
            posts.push(post(posts.len(), p, t, &rec[2], 0));
        }
    }
    let want = std::fs::read_to_string(golden("table2.txt")).unwrap();
    assert_eq!(stats::table2(&posts).render(), want);
}

#[test]
fn cell_rendering() {
    assert_eq!(StatsCell { total_posts: 7_322_094, seeds_with_posts: 668 }.render(), "7 322 094 (10 961)");
    assert_eq!(StatsCell::default().render(), DASH);
    assert_eq!(StatsCell { total_posts: 3, seeds_with_posts: 2 }.render(), "3 (2)");
    let empty = DistributionReport::from_entities(&[]);
    assert_eq!(empty.cell(Platform::Tiktok, MainType::News), "0 (—)");
}

proptest! {
    #[test]
    fn timeline_is_a_group_by(items in prop::collection::vec((0usize..3, 0i64..24 * 12), 0..80)) {
        let platforms = [Platform::Tiktok, Platform::Youtube, Platform::Bluesky];
        let posts: Vec<UnifiedPost> = items
            .iter()
            .enumerate()
            .map(|(i, (p, h))| post(i, platforms[*p], MainType::News, "s", *h))
            .collect();
        let from = NaiveDate::from_ymd_opt(2024, 1, 3).unwrap();
        let to = NaiveDate::from_ymd_opt(2024, 1, 10).unwrap();
        let tl = stats::timeline(&posts, &platforms[..2], from, to);
        let mut want: BTreeMap<(Platform, NaiveDate), u64> = BTreeMap::new();
        for p in &posts {
            let d = p.published_at.date_naive();
            if d >= from && d < to && p.platform != Platform::Bluesky {
                *want.entry((p.platform, d)).or_default() += 1;
            }
        }
        prop_assert_eq!(tl.days.len(), 7);
        for (pl, series) in &tl.series {
            for (i, c) in series.iter().enumerate() {
                prop_assert_eq!(*c, want.get(&(*pl, tl.days[i])).copied().unwrap_or(0));
            }
        }
        prop_assert_eq!(tl.total(), want.values().sum::<u64>());
        prop_assert_eq!(tl.to_csv().lines().count(), 1 + 7 * 2);
    }
}

#[test]
fn exports_round_trip() {
    let posts: Vec<UnifiedPost> = (0..5).map(|i| post(i, Platform::Telegram, MainType::Cso, "s", i as i64 * 5)).collect();
    let mut nd = Vec::new();
    assert_eq!(stats::export_ndjson(&posts, &mut nd).unwrap(), 5);
    let back: Vec<UnifiedPost> = String::from_utf8(nd).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, posts);

    let mut out = Vec::new();
    assert_eq!(stats::export_csv(&posts, &mut out).unwrap(), 5);
    let mut rdr = csv::Reader::from_reader(out.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[1][5], "2024-01-01T05:00:00Z");
    assert_eq!(&rows[1][7], "1");
    assert_eq!(&rows[1][8], "");
    assert_eq!(&rows[1][11], "https://m.example/1 https://m.example/2");
    assert_eq!(&rows[1][13], posts[1].text);
}
