//! Declarative synthetic scenarios: seed list, mock platform corpus,
//! planted effects, and the ground truth those effects imply.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::SharedClock;
use crate::connectors::mock::{self, MockError};
use crate::connectors::{FixtureDataset, GenerateOptions, MockPlatformHub, PlantedDrop, TopicBurst};
use crate::platform::{MainType, Platform};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Generate(#[from] MockError),
    #[error("scenario parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostsPerSeed {
    pub min: usize,
    pub max: usize,
}

/// Engagement drop for every seed of `main_type` (optionally on one
/// platform) from `at` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEffect {
    pub label: String,
    pub main_type: MainType,
    #[serde(default)]
    pub platform: Option<Platform>,
    pub at: DateTime<Utc>,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstEffect {
    pub platform: Platform,
    pub day: NaiveDate,
    pub term: String,
    pub posts_per_account: usize,
}

/// Days `[start, end)` (end exclusive) the crawl plan skips for one account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapEffect {
    pub platform: Platform,
    pub handle: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub rng_seed: u64,
    pub platforms: Vec<Platform>,
    pub seeds_per_type: BTreeMap<MainType, usize>,
    pub posts_per_seed: PostsPerSeed,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    #[serde(default)]
    pub engagement_base: Option<u64>,
    #[serde(default)]
    pub drops: Vec<DropEffect>,
    #[serde(default)]
    pub bursts: Vec<BurstEffect>,
    #[serde(default)]
    pub gaps: Vec<GapEffect>,
    /// Corrupted-timestamp documents per platform.
    #[serde(default)]
    pub bad_timestamps: usize,
    /// Lets posts mention and reshare other seeds of the same platform.
    #[serde(default)]
    pub interactions: bool,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            rng_seed: 1,
            platforms: vec![Platform::XTwitter],
            seeds_per_type: [(MainType::News, 2)].into_iter().collect(),
            posts_per_seed: PostsPerSeed { min: 10, max: 10 },
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            end: Utc.with_ymd_and_hms(2024, 2, 1, 0, 0, 0).unwrap(),
            engagement_base: None,
            drops: Vec::new(),
            bursts: Vec::new(),
            gaps: Vec::new(),
            bad_timestamps: 0,
            interactions: false,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.start >= self.end {
            return bad("start must precede end");
        }
        if self.platforms.is_empty() {
            return bad("no platforms");
        }
        if self.posts_per_seed.min > self.posts_per_seed.max {
            return bad("posts_per_seed.min exceeds max");
        }
        if self.seeds_per_type.values().all(|n| *n == 0) {
            return bad("no seeds");
        }
        for d in &self.drops {
            if !(0.0..100.0).contains(&d.pct) {
                return bad("drop pct must be in [0, 100)");
            }
        }
        let handles: BTreeSet<String> = self.seed_handles().into_iter().map(|(_, _, h)| h).collect();
        for g in &self.gaps {
            if g.start >= g.end {
                return bad("empty gap");
            }
            if !handles.contains(&g.handle) || !self.platforms.contains(&g.platform) {
                return bad("gap names an unknown account");
            }
            if g.start < self.start.date_naive() || g.end > self.end_day() {
                return bad("gap outside the scenario window");
            }
        }
        Ok(())
    }

    fn end_day(&self) -> NaiveDate {
        let d = self.end.date_naive();
        if self.end.time() == NaiveTime::MIN {
            d
        } else {
            d.succ_opt().unwrap_or(d)
        }
    }

    /// `(seed_id, main_type, handle)` in a fixed order.
    pub fn seed_handles(&self) -> Vec<(String, MainType, String)> {
        let mut out = Vec::new();
        for (t, n) in &self.seeds_per_type {
            for i in 0..*n {
                out.push((format!("{}-{i:03}", t.as_str()), *t, format!("{}_{i:03}", t.as_str())));
            }
        }
        out
    }
}

const PROVINCES: [&str; 5] = ["ON", "QC", "BC", "AB", "NS"];
const PARTIES: [&str; 4] = ["Liberal", "Conservative", "NDP", "Bloc Québécois"];

/// Seed CSV with one row per (seed, platform).
pub fn seeds_csv(spec: &ScenarioSpec) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(crate::seeds::SEED_CSV_HEADER).expect("in-memory write");
    for (i, (id, t, handle)) in spec.seed_handles().into_iter().enumerate() {
        let province = PROVINCES[i % PROVINCES.len()];
        let (sub_type, party) = match t {
            MainType::News => (if i % 3 == 0 { "local" } else { "national" }, ""),
            MainType::Politician => ("mp", PARTIES[i % PARTIES.len()]),
            _ => ("", ""),
        };
        for p in &spec.platforms {
            w.write_record([
                id.as_str(),
                &format!("Seed {id}"),
                t.as_str(),
                sub_type,
                party,
                "",
                province,
                "",
                "CA",
                p.as_str(),
                &handle,
                "false",
                "1000",
                "100",
                "synthetic",
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedDrop {
    pub label: String,
    pub main_type: MainType,
    pub platform: Option<Platform>,
    pub at: DateTime<Utc>,
    pub expected_pct_change: f64,
    pub posts_before: usize,
    pub posts_after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedBurst {
    pub platform: Platform,
    pub day: NaiveDate,
    pub term: String,
    pub posts: usize,
}

/// Ground truth for assertions, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedValues {
    pub rng_seed: u64,
    pub total_docs: usize,
    pub docs_per_platform: BTreeMap<Platform, usize>,
    pub docs_per_account: BTreeMap<String, usize>,
    /// Documents whose timestamp is corrupt and must be quarantined.
    pub bad_timestamp_docs: usize,
    pub gaps: Vec<GapEffect>,
    pub drops: Vec<ExpectedDrop>,
    pub bursts: Vec<ExpectedBurst>,
}

impl ExpectedValues {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializes")
    }
}

/// One crawl the scenario expects to be run; gap days are left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlWindow {
    pub platform: Platform,
    pub handle: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

pub struct Scenario {
    pub spec: ScenarioSpec,
    pub seeds_csv: String,
    pub dataset: FixtureDataset,
    pub expected: ExpectedValues,
}

fn day_start(d: NaiveDate) -> DateTime<Utc> {
    d.and_time(NaiveTime::MIN).and_utc()
}

impl Scenario {
    /// A mock hub serving this scenario's corpus.
    pub fn hub(&self, clock: SharedClock) -> Arc<MockPlatformHub> {
        let hub = MockPlatformHub::new(clock);
        hub.load(self.dataset.clone());
        Arc::new(hub)
    }

    pub fn handles(&self) -> Vec<String> {
        self.spec.seed_handles().into_iter().map(|(_, _, h)| h).collect()
    }

    /// Per-account windows covering the scenario window minus planted gaps.
    pub fn crawl_plan(&self) -> Vec<CrawlWindow> {
        let mut out = Vec::new();
        for p in &self.spec.platforms {
            for h in self.handles() {
                let mut cuts: Vec<(DateTime<Utc>, DateTime<Utc>)> = self
                    .spec
                    .gaps
                    .iter()
                    .filter(|g| g.platform == *p && g.handle == h)
                    .map(|g| (day_start(g.start), day_start(g.end)))
                    .collect();
                cuts.sort();
                let mut s = self.spec.start;
                for (gs, ge) in cuts {
                    if gs > s {
                        out.push(CrawlWindow { platform: *p, handle: h.clone(), start: s, end: gs });
                    }
                    s = s.max(ge);
                }
                if s < self.spec.end {
                    out.push(CrawlWindow { platform: *p, handle: h.clone(), start: s, end: self.spec.end });
                }
            }
        }
        out
    }
}

/// Generates the corpus and the expected-values ledger. Deterministic in
/// `spec.rng_seed`.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let accounts = spec.seed_handles();
    let handles: Vec<String> = accounts.iter().map(|a| a.2.clone()).collect();
    let mut dataset = FixtureDataset::default();
    let mut bad_timestamp_docs = 0;
    for (pi, p) in spec.platforms.iter().enumerate() {
        let drops: Vec<PlantedDrop> = spec
            .drops
            .iter()
            .filter(|d| d.platform.is_none_or(|x| x == *p))
            .map(|d| PlantedDrop {
                handles: accounts.iter().filter(|a| a.1 == d.main_type).map(|a| a.2.clone()).collect(),
                at: d.at,
                pct: d.pct,
            })
            .collect();
        let opts = GenerateOptions {
            start: spec.start,
            end: spec.end,
            engagement_base: spec.engagement_base,
            drops,
            bad_timestamps: 0,
            mention_pool: if spec.interactions { handles.clone() } else { Vec::new() },
            empty_text_rate: 0.0,
            bursts: spec
                .bursts
                .iter()
                .filter(|b| b.platform == *p)
                .map(|b| TopicBurst { day: b.day, term: b.term.clone(), posts_per_account: b.posts_per_account })
                .collect(),
        };
        let platform_seed = spec.rng_seed.wrapping_add(pi as u64 * 0x9e37_79b9);
        let full = mock::generate(*p, &handles, spec.posts_per_seed.max, platform_seed, &opts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(platform_seed ^ 0xc0ffee);
        let burst_terms: BTreeSet<&str> = opts.bursts.iter().map(|b| b.term.as_str()).collect();
        let mut generated = FixtureDataset::default();
        for ((platform, handle), docs) in full.accounts {
            let want = rng.gen_range(spec.posts_per_seed.min..=spec.posts_per_seed.max);
            let (burst, regular): (Vec<_>, Vec<_>) = docs.into_iter().partition(|d| {
                let text = String::from_utf8_lossy(&d.payload);
                burst_terms.iter().any(|t| text.contains(t))
            });
            let keep: BTreeSet<usize> = sample(&mut rng, regular.len(), want.min(regular.len())).into_iter().collect();
            let mut kept: Vec<_> = regular.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, d)| d).collect();
            kept.extend(burst);
            generated.accounts.insert((platform, handle), kept);
        }
        if spec.bad_timestamps > 0 {
            bad_timestamp_docs += corrupt_timestamps(&mut generated, spec.bad_timestamps, &mut rng);
        }
        dataset.merge(generated);
    }

    let mut docs_per_platform = BTreeMap::new();
    let mut docs_per_account = BTreeMap::new();
    for ((p, h), docs) in &dataset.accounts {
        *docs_per_platform.entry(*p).or_default() += docs.len();
        docs_per_account.insert(format!("{p}/{h}"), docs.len());
    }
    let type_of: BTreeMap<&str, MainType> = accounts.iter().map(|a| (a.2.as_str(), a.1)).collect();
    let drops = spec
        .drops
        .iter()
        .map(|d| {
            let mut before = 0;
            let mut after = 0;
            for ((p, h), docs) in &dataset.accounts {
                if type_of.get(h.as_str()) != Some(&d.main_type) || d.platform.is_some_and(|x| x != *p) {
                    continue;
                }
                for doc in docs {
                    if doc.published_at >= d.at {
                        after += 1;
                    } else {
                        before += 1;
                    }
                }
            }
            ExpectedDrop {
                label: d.label.clone(),
                main_type: d.main_type,
                platform: d.platform,
                at: d.at,
                expected_pct_change: -d.pct,
                posts_before: before,
                posts_after: after,
            }
        })
        .collect();
    let bursts = spec
        .bursts
        .iter()
        .map(|b| {
            let lo = day_start(b.day).max(spec.start);
            let hi = (day_start(b.day) + chrono::Duration::days(1)).min(spec.end);
            let per = if lo < hi { b.posts_per_account } else { 0 };
            ExpectedBurst { platform: b.platform, day: b.day, term: b.term.clone(), posts: per * handles.len() }
        })
        .collect();
    let expected = ExpectedValues {
        rng_seed: spec.rng_seed,
        total_docs: dataset.len(),
        docs_per_platform,
        docs_per_account,
        bad_timestamp_docs,
        gaps: spec.gaps.clone(),
        drops,
        bursts,
    };
    Ok(Scenario { spec: spec.clone(), seeds_csv: seeds_csv(spec), dataset, expected })
}

/// Rewrites the timestamp of `n` documents on the platform to an
/// unparseable string. Returns how many were changed.
fn corrupt_timestamps(ds: &mut FixtureDataset, n: usize, rng: &mut ChaCha8Rng) -> usize {
    let slots: Vec<(Platform, String, usize)> = ds
        .accounts
        .iter()
        .flat_map(|((p, h), docs)| (0..docs.len()).map(move |i| (*p, h.clone(), i)))
        .collect();
    let picks = sample(rng, slots.len(), n.min(slots.len()));
    let mut changed = 0;
    for i in picks {
        let (p, h, di) = &slots[i];
        let doc = &mut ds.accounts.get_mut(&(*p, h.clone())).expect("slot exists")[*di];
        let mut v: serde_json::Value = serde_json::from_slice(&doc.payload).expect("generated json");
        let field = match p {
            Platform::XTwitter => "/created_at",
            Platform::Instagram => "/taken_at",
            Platform::Youtube => "/publishedAt",
            Platform::Tiktok => "/createTime",
            Platform::Facebook => "/created_time",
            Platform::Telegram => "/date",
            Platform::Bluesky => "/record/createdAt",
        };
        if let Some(slot) = v.pointer_mut(field) {
            *slot = serde_json::json!("not-a-timestamp");
            doc.payload = Arc::from(serde_json::to_vec(&v).expect("serializes"));
            changed += 1;
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ScenarioSpec {
        ScenarioSpec {
            rng_seed: 9,
            platforms: vec![Platform::Tiktok, Platform::Youtube],
            seeds_per_type: [(MainType::News, 3), (MainType::Politician, 2)].into_iter().collect(),
            posts_per_seed: PostsPerSeed { min: 5, max: 15 },
            gaps: vec![GapEffect {
                platform: Platform::Tiktok,
                handle: "news_001".into(),
                start: NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(),
                end: NaiveDate::from_ymd_opt(2024, 1, 9).unwrap(),
            }],
            bursts: vec![BurstEffect {
                platform: Platform::Youtube,
                day: NaiveDate::from_ymd_opt(2024, 1, 10).unwrap(),
                term: "zorblat".into(),
                posts_per_account: 2,
            }],
            bad_timestamps: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_ledger() {
        let a = build_scenario(&spec()).unwrap();
        let b = build_scenario(&spec()).unwrap();
        assert_eq!(a.expected.to_json(), b.expected.to_json());
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.expected.bad_timestamp_docs, 6);
        assert_eq!(a.expected.bursts[0].posts, 10);
        for (k, n) in &a.expected.docs_per_account {
            let extra = if k.starts_with("youtube/") { 2 } else { 0 };
            assert!((5 + extra..=15 + extra).contains(n), "{k} {n}");
        }
    }

    #[test]
    fn plan_skips_gap() {
        let s = build_scenario(&spec()).unwrap();
        let w: Vec<_> = s.crawl_plan().into_iter().filter(|w| w.handle == "news_001" && w.platform == Platform::Tiktok).collect();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].end, day_start(NaiveDate::from_ymd_opt(2024, 1, 5).unwrap()));
        assert_eq!(w[1].start, day_start(NaiveDate::from_ymd_opt(2024, 1, 9).unwrap()));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec();
        s.posts_per_seed = PostsPerSeed { min: 4, max: 2 };
        assert!(build_scenario(&s).is_err());
        let mut s = spec();
        s.gaps[0].handle = "nobody".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn parses_toml() {
        let text = r#"
rng_seed = 3
platforms = ["x_twitter"]
start = "2024-01-01T00:00:00Z"
end = "2024-03-01T00:00:00Z"
engagement_base = 1000
[seeds_per_type]
news = 4
[posts_per_seed]
min = 10
max = 20
[[drops]]
label = "ban"
main_type = "news"
at = "2024-02-01T00:00:00Z"
pct = 64.0
"#;
        let s = ScenarioSpec::from_toml(text).unwrap();
        assert_eq!(s.drops[0].pct, 64.0);
        assert_eq!(s.seeds_per_type[&MainType::News], 4);
    }
}
