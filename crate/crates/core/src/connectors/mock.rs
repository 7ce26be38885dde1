//! Deterministic mock platforms.
//!
//! Raw documents follow each platform's bundled schema profile (tiktok puts
//! text in `desc`, youtube splits `title`/`description`, x_twitter uses
//! `message`, ...). Everything is derived from the rng seed, so two
//! generations with the same inputs are byte-identical.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, value::RawValue, Value};

use super::{decode_cursor, encode_cursor, ConnectorError, FetchPage, FetchRequest, PlatformConnector};
use crate::clock::SharedClock;
use crate::platform::Platform;

const TOPICS: [&[&str]; 6] = [
    &["election", "vote", "ballot", "campaign", "riding", "élection", "scrutin", "candidat", "poll", "debate"],
    &["budget", "tax", "deficit", "inflation", "économie", "impôt", "housing", "logement", "rates", "jobs"],
    &["climate", "carbon", "wildfire", "pipeline", "climat", "énergie", "emissions", "forest", "flood", "heat"],
    &["health", "hospital", "santé", "doctor", "clinic", "vaccine", "nurses", "pharmacare", "wait", "care"],
    &["news", "meta", "ban", "médias", "journalism", "outlet", "online", "links", "facebook", "reporters"],
    &["immigration", "border", "tariff", "trade", "commerce", "frontière", "students", "visa", "steel", "exports"],
];

const FILLER: [&str; 24] = [
    "the", "and", "today", "canada", "québec", "ontario", "we", "our", "new", "plan", "le", "la", "les", "pour",
    "avec", "nous", "week", "community", "report", "update", "live", "watch", "read", "thread",
];

/// A planted engagement drop: posts by `handles` published at or after `at`
/// have every metric scaled by `1 - pct / 100`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedDrop {
    pub handles: BTreeSet<String>,
    pub at: DateTime<Utc>,
    pub pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Fixed per-account engagement base; random per account when absent.
    pub engagement_base: Option<u64>,
    pub drops: Vec<PlantedDrop>,
    /// Number of documents whose timestamp field is corrupted.
    pub bad_timestamps: usize,
    /// Handles that may be mentioned in generated text.
    pub mention_pool: Vec<String>,
    /// Probability that a post has empty text.
    pub empty_text_rate: f64,
    #[serde(default)]
    pub bursts: Vec<TopicBurst>,
}

/// Extra posts per account on one day, each carrying `term`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicBurst {
    pub day: chrono::NaiveDate,
    pub term: String,
    pub posts_per_account: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            start: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            end: Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(),
            engagement_base: None,
            drops: Vec::new(),
            bad_timestamps: 0,
            mention_pool: Vec::new(),
            empty_text_rate: 0.0,
            bursts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockDoc {
    pub native_id: String,
    pub published_at: DateTime<Utc>,
    pub payload: Arc<[u8]>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureDataset {
    /// Per account, newest first.
    pub accounts: BTreeMap<(Platform, String), Vec<MockDoc>>,
}

#[derive(Debug, thiserror::Error)]
pub enum MockError {
    #[error("unsupported platform {0:?}")]
    Unsupported(String),
    #[error("post_count must be non-negative")]
    NegativeCount,
    #[error("generation window is empty")]
    EmptyWindow,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad fixture line {line} in {file}: {reason}")]
    Fixture { file: String, line: usize, reason: String },
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn sort_newest_first(docs: &mut [MockDoc]) {
    docs.sort_by(|a, b| (b.published_at, &b.native_id).cmp(&(a.published_at, &a.native_id)));
}

impl FixtureDataset {
    pub fn len(&self) -> usize {
        self.accounts.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn merge(&mut self, other: FixtureDataset) {
        for (key, docs) in other.accounts {
            let slot = self.accounts.entry(key).or_default();
            slot.extend(docs);
            sort_newest_first(slot);
        }
    }

    /// Writes one NDJSON file per account: `{dir}/{platform}/{handle}.ndjson`.
    pub fn save(&self, dir: &Path) -> Result<(), MockError> {
        for ((platform, handle), docs) in &self.accounts {
            let pdir = dir.join(platform.as_str());
            fs::create_dir_all(&pdir)?;
            let mut f = io::BufWriter::new(fs::File::create(pdir.join(format!("{handle}.ndjson")))?);
            for d in docs {
                let payload = std::str::from_utf8(&d.payload).expect("payloads are utf-8 JSON");
                writeln!(
                    f,
                    "{{\"native_id\":{},\"published_at\":{},\"payload\":{}}}",
                    Value::String(d.native_id.clone()),
                    Value::String(d.published_at.to_rfc3339()),
                    payload
                )?;
            }
            f.flush()?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, MockError> {
        #[derive(Deserialize)]
        struct Line<'a> {
            native_id: String,
            published_at: DateTime<Utc>,
            #[serde(borrow)]
            payload: &'a RawValue,
        }
        let mut out = FixtureDataset::default();
        for pdir in fs::read_dir(dir)? {
            let pdir = pdir?;
            let Ok(platform) = pdir.file_name().to_string_lossy().parse::<Platform>() else { continue };
            for file in fs::read_dir(pdir.path())? {
                let path = file?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("ndjson") {
                    continue;
                }
                let handle = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let mut docs = Vec::new();
                for (i, line) in BufReader::new(fs::File::open(&path)?).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let parsed: Line<'_> = serde_json::from_str(&line).map_err(|e| MockError::Fixture {
                        file: path.display().to_string(),
                        line: i + 1,
                        reason: e.to_string(),
                    })?;
                    docs.push(MockDoc {
                        native_id: parsed.native_id,
                        published_at: parsed.published_at,
                        payload: Arc::from(parsed.payload.get().as_bytes()),
                    });
                }
                sort_newest_first(&mut docs);
                out.accounts.insert((platform, handle), docs);
            }
        }
        Ok(out)
    }
}

struct DocSpec<'a> {
    native_id: &'a str,
    handle: &'a str,
    text: &'a str,
    published_at: DateTime<Utc>,
    likes: u64,
    shares: u64,
    comments: u64,
    views: u64,
    media: Option<String>,
    shared_from: Option<&'a str>,
    corrupt_ts: bool,
}

fn build_payload(platform: Platform, d: &DocSpec<'_>) -> Value {
    let bad = json!("not-a-timestamp");
    let rfc = |t: DateTime<Utc>| json!(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    let ts = |v: Value| if d.corrupt_ts { bad.clone() } else { v };
    match platform {
        Platform::XTwitter => {
            let mut v = json!({
                "id": d.native_id,
                "author": d.handle,
                "message": d.text,
                "created_at": ts(rfc(d.published_at)),
                "lang": "und",
                "metrics": {"like_count": d.likes, "retweet_count": d.shares, "reply_count": d.comments, "view_count": d.views},
                "media": d.media.iter().collect::<Vec<_>>(),
            });
            if let Some(src) = d.shared_from {
                v["retweeted_from"] = json!(src);
            }
            v
        }
        Platform::Instagram => json!({
            "pk": d.native_id,
            "user": {"username": d.handle},
            "caption": {"text": d.text},
            "taken_at": ts(json!(d.published_at.timestamp())),
            "like_count": d.likes,
            "comment_count": d.comments,
            "play_count": d.views,
            "image_versions": d.media.iter().map(|u| json!({"url": u})).collect::<Vec<_>>(),
        }),
        Platform::Youtube => {
            let (title, description) = match d.text.split_once(". ") {
                Some((t, rest)) => (t.to_string(), rest.to_string()),
                None => (d.text.to_string(), String::new()),
            };
            json!({
                "id": d.native_id,
                "channel": d.handle,
                "title": title,
                "description": description,
                "publishedAt": ts(rfc(d.published_at)),
                "statistics": {"viewCount": d.views.to_string(), "likeCount": d.likes.to_string(), "commentCount": d.comments.to_string()},
                "thumbnail": d.media.clone().unwrap_or_default(),
            })
        }
        Platform::Tiktok => json!({
            "id": d.native_id,
            "author": {"uniqueId": d.handle},
            "desc": d.text,
            "createTime": ts(json!(d.published_at.timestamp())),
            "stats": {"diggCount": d.likes, "shareCount": d.shares, "commentCount": d.comments, "playCount": d.views},
            "video": {"cover": d.media.clone().unwrap_or_default()},
        }),
        Platform::Facebook => json!({
            "post_id": d.native_id,
            "page": d.handle,
            "message": d.text,
            "created_time": ts(json!(d.published_at.format("%Y-%m-%dT%H:%M:%S+0000").to_string())),
            "reactions": {"summary": {"total_count": d.likes}},
            "shares": {"count": d.shares},
            "comments": {"summary": {"total_count": d.comments}},
            "full_picture": d.media.clone(),
        }),
        Platform::Telegram => {
            let mut v = json!({
                "id": d.native_id.parse::<u64>().unwrap_or_default(),
                "channel": d.handle,
                "text": d.text,
                "date": ts(json!(d.published_at.timestamp())),
                "views": d.views,
                "forwards": d.shares,
                "replies": {"replies": d.comments},
            });
            if let Some(src) = d.shared_from {
                v["fwd_from"] = json!(src);
            }
            v
        }
        Platform::Bluesky => {
            let mut v = json!({
                "cid": d.native_id,
                "uri": format!("at://{}/app.bsky.feed.post/{}", d.handle, d.native_id),
                "author": {"handle": d.handle},
                "record": {"text": d.text, "createdAt": ts(rfc(d.published_at))},
                "likeCount": d.likes,
                "repostCount": d.shares,
                "replyCount": d.comments,
                "embed": {"images": d.media.iter().map(|u| json!({"url": u})).collect::<Vec<_>>()},
            });
            if let Some(src) = d.shared_from {
                v["reposted_from"] = json!(src);
            }
            v
        }
    }
}

fn native_id(platform: Platform, rng: &mut ChaCha8Rng) -> String {
    match platform {
        Platform::XTwitter | Platform::Tiktok => format!("{}", rng.gen_range(10u64.pow(17)..10u64.pow(19))),
        Platform::Instagram => format!("{}", rng.gen_range(10u64.pow(15)..10u64.pow(18))),
        Platform::Youtube => {
            const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
            (0..11).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char).collect()
        }
        Platform::Facebook => format!("{}_{}", rng.gen_range(10u64.pow(9)..10u64.pow(10)), rng.gen_range(10u64.pow(11)..10u64.pow(12))),
        Platform::Telegram => format!("{}", rng.gen_range(1u64..10u64.pow(9))),
        Platform::Bluesky => {
            const B32: &[u8] = b"abcdefghijklmnopqrstuvwxyz234567";
            let tail: String = (0..52).map(|_| B32[rng.gen_range(0..B32.len())] as char).collect();
            format!("bafyrei{tail}")
        }
    }
}

fn account_rng(rng_seed: u64, platform: Platform, handle: &str) -> ChaCha8Rng {
    let salt = fnv1a(format!("{}/{}", platform.as_str(), handle).as_bytes());
    ChaCha8Rng::seed_from_u64(rng_seed ^ salt)
}

fn generate_text(rng: &mut ChaCha8Rng, mention_pool: &[String], own: &str) -> String {
    let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
    let n = rng.gen_range(6..20);
    let mut words: Vec<String> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.6) {
                topic[rng.gen_range(0..topic.len())].to_string()
            } else {
                FILLER[rng.gen_range(0..FILLER.len())].to_string()
            }
        })
        .collect();
    if words.len() > 6 && rng.gen_bool(0.5) {
        words[4] = format!("{}.", words[4]);
    }
    let candidates: Vec<&String> = mention_pool.iter().filter(|h| h.as_str() != own).collect();
    if !candidates.is_empty() && rng.gen_bool(0.15) {
        let pos = rng.gen_range(0..=words.len());
        words.insert(pos, format!("@{}", candidates[rng.gen_range(0..candidates.len())]));
    }
    words.join(" ")
}

/// Generates `post_count` documents per handle on `platform`.
pub fn generate(
    platform: Platform,
    handles: &[String],
    post_count: usize,
    rng_seed: u64,
    opts: &GenerateOptions,
) -> Result<FixtureDataset, MockError> {
    if opts.start >= opts.end {
        return Err(MockError::EmptyWindow);
    }
    let span = (opts.end - opts.start).num_seconds();
    let mut out = FixtureDataset::default();
    let mut used_ids = BTreeSet::new();
    let mut specs = Vec::new();
    for handle in handles {
        let mut rng = account_rng(rng_seed, platform, handle);
        let base = opts.engagement_base.unwrap_or_else(|| rng.gen_range(50..2_000));
        let mut times: Vec<(i64, Option<&str>)> = (0..post_count).map(|_| (rng.gen_range(0..span), None)).collect();
        times.sort_unstable();
        for b in &opts.bursts {
            let day_start = b.day.and_time(chrono::NaiveTime::MIN).and_utc();
            let lo = (day_start - opts.start).num_seconds().max(0);
            let hi = (day_start - opts.start).num_seconds().saturating_add(86_400).min(span);
            if lo < hi {
                times.extend((0..b.posts_per_account).map(|_| (rng.gen_range(lo..hi), Some(b.term.as_str()))));
            }
        }
        for (offset, term) in times {
            let published_at = opts.start + chrono::Duration::seconds(offset);
            let mut id = native_id(platform, &mut rng);
            while !used_ids.insert(id.clone()) {
                id = native_id(platform, &mut rng);
            }
            let text = if let Some(term) = term {
                format!("{term} {}", generate_text(&mut rng, &[], handle))
            } else if rng.gen_bool(opts.empty_text_rate.clamp(0.0, 1.0)) {
                String::new()
            } else {
                generate_text(&mut rng, &opts.mention_pool, handle)
            };
            let noise: f64 = rng.gen_range(0.9..1.1);
            let mut scale = noise;
            for drop in &opts.drops {
                if drop.handles.contains(handle) && published_at >= drop.at {
                    scale *= 1.0 - drop.pct / 100.0;
                }
            }
            let likes = (base as f64 * scale).round() as u64;
            let media = rng.gen_bool(0.3).then(|| format!("https://media.example/{}/{}.jpg", platform.as_str(), id));
            let shared_from = (!opts.mention_pool.is_empty() && rng.gen_bool(0.05))
                .then(|| opts.mention_pool[rng.gen_range(0..opts.mention_pool.len())].clone())
                .filter(|h| h != handle);
            specs.push((handle.clone(), id, text, published_at, likes, media, shared_from));
        }
    }
    let mut corrupt = BTreeSet::new();
    if opts.bad_timestamps > 0 && !specs.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_ba0d);
        while corrupt.len() < opts.bad_timestamps.min(specs.len()) {
            corrupt.insert(rng.gen_range(0..specs.len()));
        }
    }
    for (i, (handle, id, text, published_at, likes, media, shared_from)) in specs.into_iter().enumerate() {
        let spec = DocSpec {
            native_id: &id,
            handle: &handle,
            text: &text,
            published_at,
            likes,
            shares: likes / 10,
            comments: likes / 20,
            views: likes * 30,
            media,
            shared_from: shared_from.as_deref(),
            corrupt_ts: corrupt.contains(&i),
        };
        let payload = serde_json::to_vec(&build_payload(platform, &spec)).expect("json serializes");
        out.accounts
            .entry((platform, handle.clone()))
            .or_default()
            .push(MockDoc { native_id: id, published_at, payload: Arc::from(payload) });
    }
    for docs in out.accounts.values_mut() {
        sort_newest_first(docs);
    }
    for handle in handles {
        out.accounts.entry((platform, handle.clone())).or_default();
    }
    Ok(out)
}

/// Same as [`generate`], with the platform given by name.
pub fn generate_named(
    platform: &str,
    handles: &[String],
    post_count: i64,
    rng_seed: u64,
    opts: &GenerateOptions,
) -> Result<FixtureDataset, MockError> {
    let platform: Platform = platform.parse().map_err(|_| MockError::Unsupported(platform.to_string()))?;
    let count = usize::try_from(post_count).map_err(|_| MockError::NegativeCount)?;
    generate(platform, handles, count, rng_seed, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockFault {
    Throttle(Duration),
    Transient,
}

/// A page as served, before the connector stamps it.
#[derive(Debug, Clone)]
pub struct ServedPage {
    pub items: Vec<Arc<[u8]>>,
    pub next_cursor: Option<String>,
}

/// In-memory multi-platform mock server state.
pub struct MockPlatformHub {
    accounts: RwLock<BTreeMap<(Platform, String), Vec<MockDoc>>>,
    clock: SharedClock,
    faults: Mutex<VecDeque<(Option<Platform>, MockFault)>>,
    broken: RwLock<BTreeSet<(Platform, String)>>,
    rate_limit_per_minute: Option<u32>,
    requests: Mutex<Vec<(Platform, DateTime<Utc>)>>,
}

impl MockPlatformHub {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            accounts: RwLock::new(BTreeMap::new()),
            clock,
            faults: Mutex::new(VecDeque::new()),
            broken: RwLock::new(BTreeSet::new()),
            rate_limit_per_minute: None,
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Enforces a server-side sliding-window limit per platform.
    pub fn with_rate_limit(mut self, per_minute: u32) -> Self {
        self.rate_limit_per_minute = Some(per_minute);
        self
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn load(&self, dataset: FixtureDataset) {
        let mut accounts = self.accounts.write();
        for ((platform, handle), docs) in dataset.accounts {
            let slot = accounts.entry((platform, handle.to_lowercase())).or_default();
            slot.extend(docs);
            sort_newest_first(slot);
        }
    }

    pub fn inject_fault(&self, platform: Option<Platform>, fault: MockFault, count: usize) {
        let mut q = self.faults.lock();
        q.extend(std::iter::repeat_n((platform, fault), count));
    }

    /// Makes every request for this account fail with a transient error.
    pub fn break_account(&self, platform: Platform, handle: &str) {
        self.broken.write().insert((platform, handle.to_lowercase()));
    }

    pub fn repair_account(&self, platform: Platform, handle: &str) {
        self.broken.write().remove(&(platform, handle.to_lowercase()));
    }

    pub fn request_log(&self) -> Vec<(Platform, DateTime<Utc>)> {
        self.requests.lock().clone()
    }

    /// Ground truth: documents of an account published in `[start, end)`.
    pub fn docs_in_window(&self, platform: Platform, handle: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<MockDoc> {
        self.accounts
            .read()
            .get(&(platform, handle.to_lowercase()))
            .map(|docs| docs.iter().filter(|d| d.published_at >= start && d.published_at < end).cloned().collect())
            .unwrap_or_default()
    }

    pub fn total_docs(&self) -> usize {
        self.accounts.read().values().map(Vec::len).sum()
    }

    pub fn serve(
        &self,
        platform: Platform,
        handle: &str,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        cursor: Option<&str>,
        limit: usize,
    ) -> Result<ServedPage, ConnectorError> {
        let now = self.clock.now();
        {
            let mut log = self.requests.lock();
            if let Some(limit) = self.rate_limit_per_minute {
                let window_start = now - chrono::Duration::seconds(60);
                let recent = log.iter().filter(|(p, t)| *p == platform && *t > window_start).count();
                if recent >= limit as usize {
                    return Err(ConnectorError::Throttled { retry_after: Duration::from_secs(1) });
                }
            }
            log.push((platform, now));
        }
        {
            let mut faults = self.faults.lock();
            if let Some(pos) = faults.iter().position(|(p, _)| p.is_none_or(|p| p == platform)) {
                let (_, fault) = faults.remove(pos).expect("position is valid");
                return Err(match fault {
                    MockFault::Throttle(d) => ConnectorError::Throttled { retry_after: d },
                    MockFault::Transient => ConnectorError::Retryable("mock transient failure".into()),
                });
            }
        }
        let key = (platform, handle.to_lowercase());
        if self.broken.read().contains(&key) {
            return Err(ConnectorError::Retryable(format!("{platform}/{handle} unavailable")));
        }
        if start >= end || limit == 0 {
            return Err(ConnectorError::BadRequest("empty window or zero limit".into()));
        }
        let after = match cursor {
            Some(c) => Some(decode_cursor(c).ok_or_else(|| ConnectorError::BadRequest("bad cursor".into()))?),
            None => None,
        };
        let accounts = self.accounts.read();
        let docs = accounts.get(&key).ok_or_else(|| ConnectorError::NotFound(format!("{platform}/{handle}")))?;
        let mut eligible = docs.iter().filter(|d| {
            d.published_at >= start
                && d.published_at < end
                && d.published_at <= now
                && after.as_ref().is_none_or(|(ts, id)| (d.published_at, &d.native_id) < (*ts, id))
        });
        let page: Vec<&MockDoc> = eligible.by_ref().take(limit).collect();
        let more = eligible.next().is_some();
        let next_cursor = match (more, page.last()) {
            (true, Some(last)) => Some(encode_cursor(last.published_at, &last.native_id)),
            _ => None,
        };
        Ok(ServedPage { items: page.into_iter().map(|d| d.payload.clone()).collect(), next_cursor })
    }
}

/// In-process connector over a [`MockPlatformHub`].
pub struct MockConnector {
    hub: Arc<MockPlatformHub>,
    clock: SharedClock,
}

impl MockConnector {
    pub fn new(hub: Arc<MockPlatformHub>, clock: SharedClock) -> Self {
        Self { hub, clock }
    }
}

impl PlatformConnector for MockConnector {
    fn fetch(&self, req: &FetchRequest) -> Result<FetchPage, ConnectorError> {
        req.validate()?;
        let page = self.hub.serve(req.platform, &req.handle, req.start, req.end, req.cursor.as_deref(), req.page_size)?;
        Ok(FetchPage {
            payloads: page.items.iter().map(|p| p.to_vec()).collect(),
            next_cursor: page.next_cursor,
            collected_at: self.clock.now(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;

    fn clock() -> SharedClock {
        Arc::new(SimClock::new(Utc.with_ymd_and_hms(2025, 6, 1, 0, 0, 0).unwrap()))
    }

    fn hub_with(platform: Platform, handle: &str, n: usize) -> (Arc<MockPlatformHub>, MockConnector) {
        let c = clock();
        let hub = Arc::new(MockPlatformHub::new(c.clone()));
        hub.load(generate(platform, &[handle.to_string()], n, 7, &GenerateOptions::default()).unwrap());
        let conn = MockConnector::new(hub.clone(), c);
        (hub, conn)
    }

    fn year() -> (DateTime<Utc>, DateTime<Utc>) {
        (Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(), Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap())
    }

    #[test]
    fn deterministic_generation() {
        let h = vec!["creator".to_string()];
        let a = generate(Platform::Tiktok, &h, 10, 42, &GenerateOptions::default()).unwrap();
        let b = generate(Platform::Tiktok, &h, 10, 42, &GenerateOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn schema_shapes() {
        let h = vec!["acct".to_string()];
        let yt = generate(Platform::Youtube, &h, 3, 1, &GenerateOptions::default()).unwrap();
        for d in yt.accounts.values().flatten() {
            let v: Value = serde_json::from_slice(&d.payload).unwrap();
            assert!(v.get("title").is_some() && v.get("description").is_some());
        }
        let x = generate(Platform::XTwitter, &h, 3, 1, &GenerateOptions::default()).unwrap();
        for d in x.accounts.values().flatten() {
            let v: Value = serde_json::from_slice(&d.payload).unwrap();
            assert!(v["message"].is_string());
        }
        let tt = generate(Platform::Tiktok, &h, 3, 1, &GenerateOptions::default()).unwrap();
        for d in tt.accounts.values().flatten() {
            let v: Value = serde_json::from_slice(&d.payload).unwrap();
            assert!(v["desc"].is_string());
        }
    }

    #[test]
    fn unsupported_platform_and_negative_count() {
        assert!(matches!(generate_named("myspace", &[], 1, 1, &GenerateOptions::default()), Err(MockError::Unsupported(_))));
        assert!(matches!(generate_named("tiktok", &[], -1, 1, &GenerateOptions::default()), Err(MockError::NegativeCount)));
    }

    #[test]
    fn pagination_sizes() {
        let (hub, conn) = hub_with(Platform::Tiktok, "acct", 5);
        let (start, end) = year();
        let mut req = FetchRequest::new(Platform::Tiktok, "acct", start, end, 2);
        let mut sizes = Vec::new();
        loop {
            let page = conn.fetch(&req).unwrap();
            sizes.push(page.payloads.len());
            match page.next_cursor {
                Some(c) => req.cursor = Some(c),
                None => break,
            }
        }
        assert_eq!(sizes, vec![2, 2, 1]);
        assert_eq!(hub.request_log().len(), 3);
    }

    #[test]
    fn window_before_first_post_is_empty() {
        let (_, conn) = hub_with(Platform::Tiktok, "acct", 5);
        let req = FetchRequest::new(
            Platform::Tiktok,
            "acct",
            Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap(),
            10,
        );
        let page = conn.fetch(&req).unwrap();
        assert!(page.payloads.is_empty());
        assert!(page.next_cursor.is_none());
    }

    #[test]
    fn unknown_handle_not_found() {
        let (_, conn) = hub_with(Platform::Tiktok, "acct", 1);
        let (start, end) = year();
        let err = conn.fetch(&FetchRequest::new(Platform::Tiktok, "ghost", start, end, 1)).unwrap_err();
        assert!(matches!(err, ConnectorError::NotFound(_)));
    }

    #[test]
    fn faults_are_consumed_in_order() {
        let (hub, conn) = hub_with(Platform::Tiktok, "acct", 1);
        hub.inject_fault(None, MockFault::Throttle(Duration::from_secs(3)), 1);
        hub.inject_fault(Some(Platform::Tiktok), MockFault::Transient, 1);
        let (start, end) = year();
        let req = FetchRequest::new(Platform::Tiktok, "acct", start, end, 1);
        assert_eq!(conn.fetch(&req).unwrap_err(), ConnectorError::Throttled { retry_after: Duration::from_secs(3) });
        assert!(matches!(conn.fetch(&req).unwrap_err(), ConnectorError::Retryable(_)));
        assert_eq!(conn.fetch(&req).unwrap().payloads.len(), 1);
    }

    #[test]
    fn fixture_files_round_trip_bytes() {
        let h = vec!["a".to_string(), "b".to_string()];
        let ds = generate(Platform::Bluesky, &h, 4, 3, &GenerateOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        assert!(dir.path().join("bluesky/a.ndjson").exists());
        assert_eq!(FixtureDataset::load(dir.path()).unwrap(), ds);
    }
}
