//! Raw payload to [`UnifiedPost`] transformation, the unified post store and
//! the quarantine log.
//!
//! Normalization never drops a record: every raw object ends up either as a
//! unified post or as a quarantine entry with a reason.

pub mod rules;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::platform::{MainType, Platform};
use crate::raw_store::{PartitionFilter, RawObject, RawStore, RawStoreError};
use crate::seeds::{SeedEntity, SeedRegistry};

pub use rules::{lookup, MappingRule, PlatformSchemaProfile, RuleSet};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Engagement {
    pub likes: Option<u64>,
    pub shares: Option<u64>,
    pub comments: Option<u64>,
    pub views: Option<u64>,
}

impl Engagement {
    pub fn get(&self, metric: Metric) -> Option<u64> {
        match metric {
            Metric::Likes => self.likes,
            Metric::Shares => self.shares,
            Metric::Comments => self.comments,
            Metric::Views => self.views,
        }
    }

    fn set(&mut self, metric: &str, v: Option<u64>) {
        match metric {
            "likes" => self.likes = v,
            "shares" => self.shares = v,
            "comments" => self.comments = v,
            "views" => self.views = v,
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Likes,
    Shares,
    Comments,
    Views,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "likes" => Ok(Metric::Likes),
            "shares" => Ok(Metric::Shares),
            "comments" => Ok(Metric::Comments),
            "views" => Ok(Metric::Views),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Seed attributes copied into each post at normalization time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedMeta {
    pub main_type: MainType,
    pub sub_type: Option<String>,
    pub federal_party: Option<String>,
    pub province: Option<String>,
    pub collection_tags: BTreeSet<String>,
}

impl From<&SeedEntity> for SeedMeta {
    fn from(e: &SeedEntity) -> Self {
        Self {
            main_type: e.main_type,
            sub_type: e.sub_type.clone(),
            federal_party: e.federal_party.clone(),
            province: e.province.clone(),
            collection_tags: e.collection_tags.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnifiedPost {
    /// `{platform}:{native_id}`
    pub post_id: String,
    pub platform: Platform,
    pub seed_id: String,
    pub handle: String,
    pub text: String,
    pub published_at: DateTime<Utc>,
    pub collected_at: DateTime<Utc>,
    pub engagement: Engagement,
    pub media_links: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<String>,
    #[serde(default)]
    pub shared_from: Option<String>,
    pub seed_meta: SeedMeta,
    pub raw_ref: String,
    pub schema_version: u32,
}

impl UnifiedPost {
    pub fn collection_lag(&self) -> chrono::Duration {
        self.collected_at - self.published_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum NormalizeError {
    #[error("unknown seed")]
    UnknownSeed,
    #[error("bad timestamp")]
    BadTimestamp,
    #[error("missing native id")]
    MissingNativeId,
    #[error("no mapping rule")]
    NoMappingRule,
    #[error("payload is not a JSON object")]
    NotAnObject,
    #[error("collected before published")]
    CollectedBeforePublished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub raw_ref: String,
    pub platform: Platform,
    pub handle: String,
    pub reason: String,
    pub first_seen: DateTime<Utc>,
}

fn metric_value(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64().or_else(|| n.as_f64().filter(|f| *f >= 0.0).map(|f| f as u64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn collect_links(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) if !s.is_empty() => out.push(s.clone()),
        Value::Array(items) => items.iter().for_each(|i| collect_links(i, out)),
        Value::Object(map) => {
            if let Some(url) = map.get("url") {
                collect_links(url, out);
            }
        }
        _ => {}
    }
}

/// Handles following `prefix` in `text`, in order of appearance, deduplicated.
pub fn extract_mentions(text: &str, prefix: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    if prefix.is_empty() {
        return out;
    }
    let mut rest = text;
    while let Some(pos) = rest.find(prefix) {
        let preceded_by_word = text[..text.len() - rest.len() + pos]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric());
        rest = &rest[pos + prefix.len()..];
        let end = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.' || c == '-'))
            .unwrap_or(rest.len());
        let handle = rest[..end].trim_end_matches(['.', '-']);
        if !preceded_by_word && !handle.is_empty() && !out.iter().any(|h| h.eq_ignore_ascii_case(handle)) {
            out.push(handle.to_string());
        }
    }
    out
}

/// Maps one raw object to a unified post. Pure in (raw bytes, rules,
/// registry snapshot).
pub fn normalize(raw: &RawObject, registry: &SeedRegistry, rules: &RuleSet) -> Result<UnifiedPost, NormalizeError> {
    let seed = registry.find_by_handle(raw.platform, &raw.handle).ok_or(NormalizeError::UnknownSeed)?;
    normalize_with_seed(raw, &seed, rules)
}

pub fn normalize_with_seed(raw: &RawObject, seed: &SeedEntity, rules: &RuleSet) -> Result<UnifiedPost, NormalizeError> {
    let rule = rules.get(raw.platform).ok_or(NormalizeError::NoMappingRule)?;
    let doc: Value = serde_json::from_slice(&raw.payload).map_err(|_| NormalizeError::NotAnObject)?;
    if !doc.is_object() {
        return Err(NormalizeError::NotAnObject);
    }
    let native_id = match lookup(&doc, &rule.id_field) {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(NormalizeError::MissingNativeId),
    };
    let published_at = lookup(&doc, &rule.published_at_field)
        .and_then(|v| rule.parse_timestamp(v))
        .ok_or(NormalizeError::BadTimestamp)?;
    if raw.collected_at < published_at {
        return Err(NormalizeError::CollectedBeforePublished);
    }
    let text = rule
        .text_fields
        .iter()
        .filter_map(|f| lookup(&doc, f).and_then(Value::as_str))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let mut engagement = Engagement::default();
    for m in rules::METRICS {
        if let Some(path) = rule.engagement.path(m) {
            engagement.set(m, lookup(&doc, path).and_then(metric_value));
        }
    }
    let mut media_links = Vec::new();
    for f in &rule.media_fields {
        if let Some(v) = lookup(&doc, f) {
            collect_links(v, &mut media_links);
        }
    }
    let mentions = rule.mention_prefix.as_deref().map(|p| extract_mentions(&text, p)).unwrap_or_default();
    let shared_from = rule
        .share_ref_field
        .as_deref()
        .and_then(|f| lookup(&doc, f))
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(String::from);
    Ok(UnifiedPost {
        post_id: format!("{}:{}", raw.platform, native_id),
        platform: raw.platform,
        seed_id: seed.id.clone(),
        handle: raw.handle.clone(),
        text,
        published_at,
        collected_at: raw.collected_at,
        engagement,
        media_links,
        mentions,
        shared_from,
        seed_meta: SeedMeta::from(seed),
        raw_ref: raw.object_id.clone(),
        schema_version: rule.schema_version,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt journal line {line}: {source}")]
    Journal { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Raw(#[from] RawStoreError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalEvent {
    Upsert { post: Box<UnifiedPost> },
    Remove { post_id: String },
    Quarantine { record: QuarantineRecord },
    Release { raw_ref: String },
    Normalized { raw_ref: String, post_id: String },
}

#[derive(Debug, Default)]
struct StoreInner {
    posts: BTreeMap<String, UnifiedPost>,
    quarantine: BTreeMap<String, QuarantineRecord>,
    /// raw_ref -> post_id for every raw object that normalized successfully.
    normalized_refs: BTreeMap<String, String>,
}

impl StoreInner {
    fn apply(&mut self, ev: JournalEvent) {
        match ev {
            JournalEvent::Upsert { post } => {
                self.posts.insert(post.post_id.clone(), *post);
            }
            JournalEvent::Remove { post_id } => {
                self.posts.remove(&post_id);
            }
            JournalEvent::Quarantine { record } => {
                self.normalized_refs.remove(&record.raw_ref);
                self.quarantine.insert(record.raw_ref.clone(), record);
            }
            JournalEvent::Release { raw_ref } => {
                self.quarantine.remove(&raw_ref);
            }
            JournalEvent::Normalized { raw_ref, post_id } => {
                self.normalized_refs.insert(raw_ref, post_id);
            }
        }
    }
}

/// What a single normalization outcome did to the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyEffect {
    Inserted,
    Replaced,
    Unchanged,
    /// A newer collection of the same post is already stored.
    Stale,
    Quarantined,
    /// Quarantined, and the post it previously produced was withdrawn.
    Withdrawn,
}

/// Unified posts, quarantine and the raw-ref outcome map, persisted as an
/// append-only journal at `unified/journal.ndjson`.
pub struct UnifiedStore {
    path: Option<PathBuf>,
    inner: RwLock<StoreInner>,
    journal: Mutex<Option<BufWriter<File>>>,
}

impl UnifiedStore {
    pub fn in_memory() -> Self {
        Self { path: None, inner: RwLock::new(StoreInner::default()), journal: Mutex::new(None) }
    }

    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let dir = root.join("unified");
        fs::create_dir_all(&dir)?;
        let path = dir.join("journal.ndjson");
        let mut inner = StoreInner::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<JournalEvent>(&line) {
                    Ok(ev) => inner.apply(ev),
                    // a torn final line from an interrupted write is ignored
                    Err(source) if source.is_eof() => break,
                    Err(source) => return Err(StoreError::Journal { line: i + 1, source }),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path: Some(path), inner: RwLock::new(inner), journal: Mutex::new(Some(BufWriter::new(file))) })
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn commit(&self, events: Vec<JournalEvent>) -> Result<(), StoreError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut journal = self.journal.lock();
        if let Some(w) = journal.as_mut() {
            for ev in &events {
                serde_json::to_writer(&mut *w, ev).map_err(io::Error::from)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        let mut inner = self.inner.write();
        for ev in events {
            inner.apply(ev);
        }
        Ok(())
    }

    /// Records a batch of normalization outcomes for the given raw objects.
    pub fn apply_outcomes(
        &self,
        outcomes: &[(&RawObject, Result<UnifiedPost, NormalizeError>)],
        now: DateTime<Utc>,
    ) -> Result<Vec<ApplyEffect>, StoreError> {
        let mut events = Vec::new();
        let mut effects = Vec::with_capacity(outcomes.len());
        {
            let inner = self.inner.read();
            // posts touched earlier in this batch shadow the committed state
            let mut shadow: BTreeMap<String, Option<UnifiedPost>> = BTreeMap::new();
            let mut q_shadow: BTreeMap<String, bool> = BTreeMap::new();
            for (raw, outcome) in outcomes {
                let in_quarantine =
                    *q_shadow.get(&raw.object_id).unwrap_or(&inner.quarantine.contains_key(&raw.object_id));
                match outcome {
                    Ok(post) => {
                        if in_quarantine {
                            events.push(JournalEvent::Release { raw_ref: raw.object_id.clone() });
                            q_shadow.insert(raw.object_id.clone(), false);
                        }
                        events.push(JournalEvent::Normalized {
                            raw_ref: raw.object_id.clone(),
                            post_id: post.post_id.clone(),
                        });
                        let existing = shadow
                            .get(&post.post_id)
                            .cloned()
                            .unwrap_or_else(|| inner.posts.get(&post.post_id).cloned());
                        let effect = match existing {
                            None => ApplyEffect::Inserted,
                            Some(old) if old == *post => ApplyEffect::Unchanged,
                            Some(old) if old.collected_at > post.collected_at => ApplyEffect::Stale,
                            Some(_) => ApplyEffect::Replaced,
                        };
                        if matches!(effect, ApplyEffect::Inserted | ApplyEffect::Replaced) {
                            events.push(JournalEvent::Upsert { post: Box::new(post.clone()) });
                            shadow.insert(post.post_id.clone(), Some(post.clone()));
                        }
                        effects.push(effect);
                    }
                    Err(reason) => {
                        let first_seen = inner.quarantine.get(&raw.object_id).map(|r| r.first_seen).unwrap_or(now);
                        let produced = inner.normalized_refs.get(&raw.object_id).cloned();
                        let mut effect = ApplyEffect::Quarantined;
                        if let Some(post_id) = produced {
                            let current = shadow.get(&post_id).cloned().unwrap_or_else(|| inner.posts.get(&post_id).cloned());
                            if current.is_some_and(|p| p.raw_ref == raw.object_id) {
                                events.push(JournalEvent::Remove { post_id: post_id.clone() });
                                shadow.insert(post_id, None);
                                effect = ApplyEffect::Withdrawn;
                            }
                        }
                        events.push(JournalEvent::Quarantine {
                            record: QuarantineRecord {
                                raw_ref: raw.object_id.clone(),
                                platform: raw.platform,
                                handle: raw.handle.clone(),
                                reason: reason.to_string(),
                                first_seen,
                            },
                        });
                        q_shadow.insert(raw.object_id.clone(), true);
                        effects.push(effect);
                    }
                }
            }
        }
        self.commit(events)?;
        Ok(effects)
    }

    pub fn get(&self, post_id: &str) -> Option<UnifiedPost> {
        self.inner.read().posts.get(post_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All posts ordered by post_id.
    pub fn posts(&self) -> Vec<UnifiedPost> {
        self.inner.read().posts.values().cloned().collect()
    }

    pub fn posts_where(&self, pred: impl Fn(&UnifiedPost) -> bool) -> Vec<UnifiedPost> {
        self.inner.read().posts.values().filter(|p| pred(p)).cloned().collect()
    }

    /// Quarantine entries ordered by first_seen then raw_ref.
    pub fn quarantine_report(&self) -> Vec<QuarantineRecord> {
        let mut out: Vec<_> = self.inner.read().quarantine.values().cloned().collect();
        out.sort_by(|a, b| (a.first_seen, &a.raw_ref).cmp(&(b.first_seen, &b.raw_ref)));
        out
    }

    pub fn quarantine_count(&self) -> usize {
        self.inner.read().quarantine.len()
    }

    pub fn is_quarantined(&self, raw_ref: &str) -> bool {
        self.inner.read().quarantine.contains_key(raw_ref)
    }

    pub fn is_normalized(&self, raw_ref: &str) -> bool {
        self.inner.read().normalized_refs.contains_key(raw_ref)
    }

    /// Rewrites the journal as the minimal event set for the current state.
    pub fn compact(&self) -> Result<(), StoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut journal = self.journal.lock();
        let inner = self.inner.read();
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            let mut write = |ev: &JournalEvent| -> io::Result<()> {
                serde_json::to_writer(&mut w, ev).map_err(io::Error::from)?;
                w.write_all(b"\n")
            };
            for (raw_ref, post_id) in &inner.normalized_refs {
                write(&JournalEvent::Normalized { raw_ref: raw_ref.clone(), post_id: post_id.clone() })?;
            }
            for post in inner.posts.values() {
                write(&JournalEvent::Upsert { post: Box::new(post.clone()) })?;
            }
            for record in inner.quarantine.values() {
                write(&JournalEvent::Quarantine { record: record.clone() })?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        *journal = Some(BufWriter::new(OpenOptions::new().append(true).open(path)?));
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenormalizeReport {
    pub reprocessed: usize,
    /// Posts whose stored record changed (inserted, replaced or withdrawn).
    pub changed: Vec<String>,
    pub newly_quarantined: usize,
    pub released: usize,
}

/// Regenerates unified posts from stored raw bytes under the current rules
/// and registry. Raw objects are replayed in collection order so the latest
/// collection of each post wins.
pub fn renormalize(
    raw_store: &RawStore,
    filter: &PartitionFilter,
    registry: &SeedRegistry,
    rules: &RuleSet,
    store: &UnifiedStore,
    now: DateTime<Utc>,
) -> Result<RenormalizeReport, StoreError> {
    let mut report = RenormalizeReport::default();
    let mut batch: Vec<RawObject> = Vec::new();
    let mut changed = BTreeSet::new();
    let mut flush = |batch: &mut Vec<RawObject>, report: &mut RenormalizeReport| -> Result<(), StoreError> {
        let outcomes: Vec<_> = batch.iter().map(|r| (r, normalize(r, registry, rules))).collect();
        let was_quarantined: Vec<bool> = batch.iter().map(|r| store.is_quarantined(&r.object_id)).collect();
        let effects = store.apply_outcomes(&outcomes, now)?;
        for (((raw, outcome), effect), was_q) in outcomes.iter().zip(&effects).zip(was_quarantined) {
            match (outcome, effect) {
                (Ok(post), ApplyEffect::Inserted | ApplyEffect::Replaced) => {
                    changed.insert(post.post_id.clone());
                }
                (Err(_), _) if !was_q => report.newly_quarantined += 1,
                _ => {}
            }
            if outcome.is_ok() && was_q {
                report.released += 1;
            }
            if *effect == ApplyEffect::Withdrawn {
                if let Some(pid) = raw_post_id(raw, rules) {
                    changed.insert(pid);
                }
            }
        }
        report.reprocessed += batch.len();
        batch.clear();
        Ok(())
    };
    for obj in raw_store.scan(filter) {
        batch.push(obj?);
        if batch.len() >= 512 {
            flush(&mut batch, &mut report)?;
        }
    }
    flush(&mut batch, &mut report)?;
    report.changed = changed.into_iter().collect();
    Ok(report)
}

/// The post id a raw object would map to, if its native id is readable.
pub fn raw_post_id(raw: &RawObject, rules: &RuleSet) -> Option<String> {
    let rule = rules.get(raw.platform)?;
    let doc: Value = serde_json::from_slice(&raw.payload).ok()?;
    let id = match lookup(&doc, &rule.id_field)? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    Some(format!("{}:{}", raw.platform, id))
}

/// The platform's own text fields, keyed by their native names.
pub fn project_text_fields(payload: &[u8], rule: &MappingRule) -> BTreeMap<String, String> {
    let Ok(doc) = serde_json::from_slice::<Value>(payload) else { return BTreeMap::new() };
    rule.text_fields
        .iter()
        .filter_map(|f| lookup(&doc, f).and_then(Value::as_str).map(|s| (f.clone(), s.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const HEADER: &str = "id,name,main_type,sub_type,federal_party,provincial_party,province,riding,country,platform,handle,verified,followers,following,collection_tags\n";

    fn registry() -> SeedRegistry {
        let reg = SeedRegistry::default();
        let body = format!(
            "{HEADER}s1,Seed One,news,local,,,QC,,CA,tiktok,tt,true,,,fr\n\
             s1,Seed One,news,local,,,QC,,CA,youtube,yt,true,,,fr\n\
             s1,Seed One,news,local,,,QC,,CA,x_twitter,xx,true,,,fr\n"
        );
        reg.import_seeds(body.as_bytes(), Utc::now()).unwrap();
        reg
    }

    fn raw(platform: Platform, handle: &str, payload: &str) -> RawObject {
        RawObject {
            object_id: crate::raw_store::object_id(payload.as_bytes()),
            platform,
            handle: handle.into(),
            payload: payload.as_bytes().to_vec(),
            collected_at: Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap(),
            crawl_run_id: "r".into(),
        }
    }

    #[test]
    fn tiktok_desc_and_digg_count() {
        let r = raw(Platform::Tiktok, "tt", r#"{"id":"7","desc":"Hello","createTime":1704456000,"stats":{"diggCount":3}}"#);
        let post = normalize(&r, &registry(), &RuleSet::bundled()).unwrap();
        assert_eq!(post.post_id, "tiktok:7");
        assert_eq!(post.text, "Hello");
        assert_eq!(post.engagement.likes, Some(3));
        assert_eq!(post.engagement.shares, None);
        assert_eq!(post.seed_meta.province.as_deref(), Some("QC"));
    }

    #[test]
    fn youtube_title_then_description() {
        let r = raw(Platform::Youtube, "yt", r#"{"id":"v1","title":"A","description":"B","publishedAt":"2024-01-01T00:00:00Z"}"#);
        assert_eq!(normalize(&r, &registry(), &RuleSet::bundled()).unwrap().text, "A\nB");
    }

    #[test]
    fn twitter_message() {
        let r = raw(Platform::XTwitter, "xx", r#"{"id":"9","message":"x","created_at":"2024-01-01T00:00:00Z"}"#);
        assert_eq!(normalize(&r, &registry(), &RuleSet::bundled()).unwrap().text, "x");
    }

    #[test]
    fn quarantine_reasons() {
        let reg = registry();
        let rules = RuleSet::bundled();
        let cases = [
            (Platform::XTwitter, "nobody", r#"{"id":"9","message":"x","created_at":"2024-01-01T00:00:00Z"}"#, "unknown seed"),
            (Platform::XTwitter, "xx", r#"{"id":"9","message":"x","created_at":"yesterday"}"#, "bad timestamp"),
            (Platform::XTwitter, "xx", r#"{"message":"x","created_at":"2024-01-01T00:00:00Z"}"#, "missing native id"),
            (Platform::XTwitter, "xx", r#"{"id":"9","message":"x","created_at":"2030-01-01T00:00:00Z"}"#, "collected before published"),
        ];
        for (p, h, body, reason) in cases {
            assert_eq!(normalize(&raw(p, h, body), &reg, &rules).unwrap_err().to_string(), reason);
        }
    }

    #[test]
    fn zero_is_not_absent() {
        let r = raw(Platform::Tiktok, "tt", r#"{"id":"1","desc":"","createTime":1,"stats":{"diggCount":0}}"#);
        let post = normalize(&r, &registry(), &RuleSet::bundled()).unwrap();
        assert_eq!(post.engagement.likes, Some(0));
        assert_eq!(post.engagement.views, None);
    }

    #[test]
    fn mentions() {
        assert_eq!(extract_mentions("hi @alice and @bob_2. mail a@b.c @alice", "@"), vec!["alice", "bob_2"]);
        assert!(extract_mentions("no mentions", "@").is_empty());
    }

    #[test]
    fn store_journal_replays() {
        let dir = tempfile::tempdir().unwrap();
        let reg = registry();
        let rules = RuleSet::bundled();
        let good = raw(Platform::Tiktok, "tt", r#"{"id":"7","desc":"Hello","createTime":1704456000}"#);
        let bad = raw(Platform::Tiktok, "tt", r#"{"id":"8","desc":"Hi","createTime":"soon"}"#);
        let now = Utc.with_ymd_and_hms(2024, 6, 2, 0, 0, 0).unwrap();
        {
            let store = UnifiedStore::open(dir.path()).unwrap();
            let outcomes = vec![(&good, normalize(&good, &reg, &rules)), (&bad, normalize(&bad, &reg, &rules))];
            let effects = store.apply_outcomes(&outcomes, now).unwrap();
            assert_eq!(effects, vec![ApplyEffect::Inserted, ApplyEffect::Quarantined]);
        }
        let store = UnifiedStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 1);
        let q = store.quarantine_report();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].reason, "bad timestamp");
        assert_eq!(q[0].first_seen, now);
        store.compact().unwrap();
        let again = UnifiedStore::open(dir.path()).unwrap();
        assert_eq!(again.posts(), store.posts());
        assert_eq!(again.quarantine_report(), q);
    }

    #[test]
    fn empty_pipeline_has_empty_quarantine() {
        assert!(UnifiedStore::in_memory().quarantine_report().is_empty());
    }
}
