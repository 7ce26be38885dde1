//! Post-volume tables, daily timelines and flat exports.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::normalize::{Metric, UnifiedPost};
use crate::platform::{MainType, Platform};
use crate::seeds::{group_digits, render_pipe_table};

pub const TABLE2_ROWS: [Platform; 7] = [
    Platform::XTwitter,
    Platform::Facebook,
    Platform::Instagram,
    Platform::Youtube,
    Platform::Tiktok,
    Platform::Telegram,
    Platform::Bluesky,
];

pub const TABLE2_COLUMNS: [MainType; 6] = [
    MainType::News,
    MainType::Foreign,
    MainType::Influencer,
    MainType::Politician,
    MainType::Cso,
    MainType::Government,
];

pub const DASH: &str = "–";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsCell {
    pub total_posts: u64,
    /// Seeds with at least one post in this cell.
    pub seeds_with_posts: u64,
}

impl StatsCell {
    /// Rounded half away from zero; `None` for an empty cell.
    pub fn avg_posts_per_seed(&self) -> Option<u64> {
        (self.seeds_with_posts > 0).then(|| (self.total_posts + self.seeds_with_posts / 2) / self.seeds_with_posts)
    }

    pub fn render(&self) -> String {
        match self.avg_posts_per_seed() {
            Some(avg) if self.total_posts > 0 => render_total_avg(self.total_posts, avg),
            _ => DASH.to_string(),
        }
    }
}

/// `7322094, 10961` → `"7 322 094 (10 961)"`.
pub fn render_total_avg(total: u64, avg: u64) -> String {
    format!("{} ({})", group_digits(total, ' '), group_digits(avg, ' '))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsTable {
    pub cells: BTreeMap<Platform, BTreeMap<MainType, StatsCell>>,
}

impl StatsTable {
    pub fn cell(&self, platform: Platform, main_type: MainType) -> StatsCell {
        self.cells.get(&platform).and_then(|r| r.get(&main_type)).copied().unwrap_or_default()
    }

    pub fn render(&self) -> String {
        let mut header = vec!["Platform".to_string()];
        header.extend(TABLE2_COLUMNS.iter().map(|t| t.column_label().to_string()));
        let mut rows = vec![header];
        for p in TABLE2_ROWS {
            let mut row = vec![p.display_name().to_string()];
            row.extend(TABLE2_COLUMNS.iter().map(|t| self.cell(p, *t).render()));
            rows.push(row);
        }
        render_pipe_table(&rows)
    }
}

pub fn table2<'a>(posts: impl IntoIterator<Item = &'a UnifiedPost>) -> StatsTable {
    let mut seeds: BTreeMap<(Platform, MainType), BTreeSet<&str>> = BTreeMap::new();
    let mut totals: BTreeMap<(Platform, MainType), u64> = BTreeMap::new();
    for p in posts {
        let key = (p.platform, p.seed_meta.main_type);
        *totals.entry(key).or_default() += 1;
        seeds.entry(key).or_default().insert(&p.seed_id);
    }
    let mut table = StatsTable::default();
    for (key, total) in totals {
        let cell = StatsCell { total_posts: total, seeds_with_posts: seeds[&key].len() as u64 };
        table.cells.entry(key.0).or_default().insert(key.1, cell);
    }
    table
}

/// Daily post counts per platform over `[from, to)`, zero-filled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub days: Vec<NaiveDate>,
    pub series: BTreeMap<Platform, Vec<u64>>,
}

impl Timeline {
    pub fn total(&self) -> u64 {
        self.series.values().flatten().sum()
    }

    /// `day,platform,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,platform,count\n");
        for (i, d) in self.days.iter().enumerate() {
            for (p, v) in &self.series {
                out.push_str(&format!("{d},{p},{}\n", v[i]));
            }
        }
        out
    }
}

pub fn timeline<'a>(
    posts: impl IntoIterator<Item = &'a UnifiedPost>,
    platforms: &[Platform],
    from: NaiveDate,
    to: NaiveDate,
) -> Timeline {
    let days: Vec<NaiveDate> = from.iter_days().take_while(|d| *d < to).collect();
    let mut series: BTreeMap<Platform, Vec<u64>> = platforms.iter().map(|p| (*p, vec![0; days.len()])).collect();
    for p in posts {
        let d = p.published_at.date_naive();
        if d < from || d >= to {
            continue;
        }
        if let Some(s) = series.get_mut(&p.platform) {
            s[(d - from).num_days() as usize] += 1;
        }
    }
    Timeline { days, series }
}

pub fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub const CSV_COLUMNS: [&str; 14] = [
    "post_id",
    "platform",
    "seed_id",
    "handle",
    "main_type",
    "published_at",
    "collected_at",
    "likes",
    "shares",
    "comments",
    "views",
    "media_links",
    "mentions",
    "text",
];

/// One full JSON record per line.
pub fn export_ndjson<'a, W: Write>(posts: impl IntoIterator<Item = &'a UnifiedPost>, mut w: W) -> std::io::Result<usize> {
    let mut n = 0;
    for p in posts {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

/// Flat projection; list fields joined with spaces, missing metrics empty.
pub fn export_csv<'a, W: Write>(posts: impl IntoIterator<Item = &'a UnifiedPost>, w: W) -> std::io::Result<usize> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    let metric = |p: &UnifiedPost, m: Metric| p.engagement.get(m).map(|v| v.to_string()).unwrap_or_default();
    let mut n = 0;
    for p in posts {
        out.write_record([
            p.post_id.clone(),
            p.platform.to_string(),
            p.seed_id.clone(),
            p.handle.clone(),
            p.seed_meta.main_type.to_string(),
            rfc3339(p.published_at),
            rfc3339(p.collected_at),
            metric(p, Metric::Likes),
            metric(p, Metric::Shares),
            metric(p, Metric::Comments),
            metric(p, Metric::Views),
            p.media_links.join(" "),
            p.mentions.join(" "),
            p.text.clone(),
        ])?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}
