//! Append-only, content-addressed store for raw platform payloads.
//!
//! Layout under the store root:
//!
//! ```text
//! raw/{platform}/{YYYY-MM-DD}/{object_id}.json
//! raw/{platform}/{YYYY-MM-DD}/MANIFEST.json
//! ```
//!
//! A partition is `(platform, UTC date of collected_at)`. Identical payload
//! bytes are deduplicated inside a partition only, so re-collections on later
//! days are kept.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::platform::Platform;

pub const MANIFEST_FILE: &str = "MANIFEST.json";

#[derive(Debug, thiserror::Error)]
pub enum RawStoreError {
    #[error("payload is empty")]
    Empty,
    #[error("payload is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("object {0} not found")]
    NotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt manifest {path}: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
}

/// Lowercase hex SHA-256 of the payload bytes.
pub fn object_id(payload: &[u8]) -> String {
    hex::encode(Sha256::digest(payload))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawObject {
    pub object_id: String,
    pub platform: Platform,
    pub handle: String,
    #[serde(with = "payload_text")]
    pub payload: Vec<u8>,
    pub collected_at: DateTime<Utc>,
    pub crawl_run_id: String,
}

impl RawObject {
    pub fn partition(&self) -> PartitionKey {
        PartitionKey { platform: self.platform, date: self.collected_at.date_naive() }
    }
}

mod payload_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionKey {
    pub platform: Platform,
    pub date: NaiveDate,
}

impl PartitionKey {
    fn dir(&self, root: &Path) -> PathBuf {
        root.join("raw").join(self.platform.as_str()).join(self.date.format("%Y-%m-%d").to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub handle: String,
    pub collected_at: DateTime<Utc>,
    pub crawl_run_id: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub bytes: u64,
    pub ids: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    fn push(&mut self, e: ManifestEntry) {
        self.count += 1;
        self.bytes += e.bytes;
        self.ids.push(e.id.clone());
        self.entries.push(e);
    }
}

#[derive(Debug, Default)]
struct Partition {
    manifest: Manifest,
    ids: HashMap<String, usize>,
}

/// Selects partitions by platform and an optional `[from, to)` date range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionFilter {
    pub platform: Option<Platform>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl PartitionFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn platform(p: Platform) -> Self {
        Self { platform: Some(p), ..Self::default() }
    }

    pub fn matches(&self, key: &PartitionKey) -> bool {
        self.platform.is_none_or(|p| p == key.platform)
            && self.from.is_none_or(|f| key.date >= f)
            && self.to.is_none_or(|t| key.date < t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PutOutcome {
    pub object_id: String,
    pub deduplicated: bool,
}

#[derive(Debug, Clone)]
pub struct PutRequest<'a> {
    pub platform: Platform,
    pub handle: &'a str,
    pub payload: &'a [u8],
    pub collected_at: DateTime<Utc>,
    pub crawl_run_id: &'a str,
}

pub struct RawStore {
    root: PathBuf,
    partitions: RwLock<BTreeMap<PartitionKey, Arc<Mutex<Partition>>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn validate_payload(payload: &[u8]) -> Result<(), RawStoreError> {
    if payload.is_empty() {
        return Err(RawStoreError::Empty);
    }
    serde_json::from_slice::<serde::de::IgnoredAny>(payload)
        .map(|_| ())
        .map_err(|e| RawStoreError::InvalidJson(e.to_string()))
}

impl RawStore {
    /// Opens (or creates) a store rooted at `root`, loading every partition
    /// manifest found on disk.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RawStoreError> {
        let root = root.into();
        let raw = root.join("raw");
        fs::create_dir_all(&raw)?;
        let mut partitions = BTreeMap::new();
        for pdir in fs::read_dir(&raw)? {
            let pdir = pdir?;
            let Ok(platform) = pdir.file_name().to_string_lossy().parse::<Platform>() else {
                continue;
            };
            for ddir in fs::read_dir(pdir.path())? {
                let ddir = ddir?;
                let Ok(date) = NaiveDate::parse_from_str(&ddir.file_name().to_string_lossy(), "%Y-%m-%d")
                else {
                    continue;
                };
                let mpath = ddir.path().join(MANIFEST_FILE);
                if !mpath.exists() {
                    continue;
                }
                let manifest: Manifest = serde_json::from_slice(&fs::read(&mpath)?)
                    .map_err(|source| RawStoreError::Manifest { path: mpath.clone(), source })?;
                let ids = manifest.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
                partitions.insert(PartitionKey { platform, date }, Arc::new(Mutex::new(Partition { manifest, ids })));
            }
        }
        Ok(Self { root, partitions: RwLock::new(partitions) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn partition(&self, key: PartitionKey) -> Arc<Mutex<Partition>> {
        if let Some(p) = self.partitions.read().get(&key) {
            return p.clone();
        }
        self.partitions.write().entry(key).or_default().clone()
    }

    pub fn put(
        &self,
        platform: Platform,
        handle: &str,
        payload: &[u8],
        collected_at: DateTime<Utc>,
        crawl_run_id: &str,
    ) -> Result<PutOutcome, RawStoreError> {
        self.put_batch(&[PutRequest { platform, handle, payload, collected_at, crawl_run_id }])
            .pop()
            .expect("one request yields one outcome")
    }

    /// Stores a batch, rewriting each touched partition manifest once. Each
    /// item succeeds or fails on its own; a failed item leaves no record.
    pub fn put_batch(&self, items: &[PutRequest<'_>]) -> Vec<Result<PutOutcome, RawStoreError>> {
        let mut results: Vec<Option<Result<PutOutcome, RawStoreError>>> = (0..items.len()).map(|_| None).collect();
        let mut by_partition: BTreeMap<PartitionKey, Vec<usize>> = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            match validate_payload(item.payload) {
                Ok(()) => by_partition
                    .entry(PartitionKey { platform: item.platform, date: item.collected_at.date_naive() })
                    .or_default()
                    .push(i),
                Err(e) => results[i] = Some(Err(e)),
            }
        }
        for (key, idxs) in by_partition {
            let part = self.partition(key);
            let mut part = part.lock();
            let dir = key.dir(&self.root);
            if let Err(e) = fs::create_dir_all(&dir) {
                for i in idxs {
                    results[i] = Some(Err(RawStoreError::Io(io::Error::new(e.kind(), e.to_string()))));
                }
                continue;
            }
            let mut staged = part.manifest.clone();
            let mut staged_ids = part.ids.clone();
            let mut pending = Vec::new();
            for i in idxs {
                let item = &items[i];
                let id = object_id(item.payload);
                if staged_ids.contains_key(&id) {
                    results[i] = Some(Ok(PutOutcome { object_id: id, deduplicated: true }));
                    continue;
                }
                match write_atomic(&dir.join(format!("{id}.json")), item.payload) {
                    Ok(()) => {
                        staged_ids.insert(id.clone(), staged.entries.len());
                        staged.push(ManifestEntry {
                            id: id.clone(),
                            handle: item.handle.to_string(),
                            collected_at: item.collected_at,
                            crawl_run_id: item.crawl_run_id.to_string(),
                            bytes: item.payload.len() as u64,
                        });
                        pending.push((i, id));
                    }
                    Err(e) => results[i] = Some(Err(e.into())),
                }
            }
            if pending.is_empty() {
                continue;
            }
            let body = serde_json::to_vec_pretty(&staged).expect("manifest serializes");
            match write_atomic(&dir.join(MANIFEST_FILE), &body) {
                Ok(()) => {
                    part.manifest = staged;
                    part.ids = staged_ids;
                    for (i, id) in pending {
                        results[i] = Some(Ok(PutOutcome { object_id: id, deduplicated: false }));
                    }
                }
                Err(e) => {
                    for (i, _) in pending {
                        results[i] = Some(Err(RawStoreError::Io(io::Error::new(e.kind(), e.to_string()))));
                    }
                }
            }
        }
        results.into_iter().map(|r| r.expect("every item resolved")).collect()
    }

    fn load(&self, key: PartitionKey, entry: &ManifestEntry, platform: Platform) -> Result<RawObject, RawStoreError> {
        let payload = fs::read(key.dir(&self.root).join(format!("{}.json", entry.id)))?;
        Ok(RawObject {
            object_id: entry.id.clone(),
            platform,
            handle: entry.handle.clone(),
            payload,
            collected_at: entry.collected_at,
            crawl_run_id: entry.crawl_run_id.clone(),
        })
    }

    /// Returns the earliest-collected copy of the object.
    pub fn get(&self, object_id: &str) -> Result<RawObject, RawStoreError> {
        let parts: Vec<_> = self.partitions.read().iter().map(|(k, v)| (*k, v.clone())).collect();
        let mut best: Option<(PartitionKey, ManifestEntry)> = None;
        for (key, part) in parts {
            let part = part.lock();
            if let Some(&i) = part.ids.get(object_id) {
                let e = &part.manifest.entries[i];
                if best.as_ref().is_none_or(|(_, b)| e.collected_at < b.collected_at) {
                    best = Some((key, e.clone()));
                }
            }
        }
        let (key, entry) = best.ok_or_else(|| RawStoreError::NotFound(object_id.to_string()))?;
        self.load(key, &entry, key.platform)
    }

    pub fn contains(&self, object_id: &str) -> bool {
        self.partitions.read().values().any(|p| p.lock().ids.contains_key(object_id))
    }

    /// Every object in matching partitions exactly once, ordered by
    /// `(platform, collected_at, object_id)`.
    pub fn scan(&self, filter: &PartitionFilter) -> impl Iterator<Item = Result<RawObject, RawStoreError>> + '_ {
        let mut entries: Vec<(PartitionKey, ManifestEntry)> = Vec::new();
        for (key, part) in self.partitions.read().iter() {
            if filter.matches(key) {
                entries.extend(part.lock().manifest.entries.iter().cloned().map(|e| (*key, e)));
            }
        }
        entries.sort_by(|(ka, a), (kb, b)| {
            (ka.platform, a.collected_at, &a.id).cmp(&(kb.platform, b.collected_at, &b.id))
        });
        entries.into_iter().map(move |(key, e)| self.load(key, &e, key.platform))
    }

    pub fn manifests(&self) -> BTreeMap<PartitionKey, Manifest> {
        self.partitions.read().iter().map(|(k, v)| (*k, v.lock().manifest.clone())).collect()
    }

    pub fn total_count(&self) -> usize {
        self.partitions.read().values().map(|p| p.lock().manifest.count).sum()
    }

    /// Recomputes every payload hash; returns ids whose bytes no longer match.
    pub fn verify(&self) -> Result<Vec<String>, RawStoreError> {
        let mut bad = Vec::new();
        for obj in self.scan(&PartitionFilter::all()) {
            let obj = obj?;
            if object_id(&obj.payload) != obj.object_id {
                bad.push(obj.object_id);
            }
        }
        Ok(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(day: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 3, day, 12, 0, 0).unwrap()
    }

    #[test]
    fn content_addressing_dedups_within_partition() {
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::open(dir.path()).unwrap();
        let a = store.put(Platform::XTwitter, "h", br#"{"message":"hi"}"#, t(1), "r1").unwrap();
        let b = store.put(Platform::XTwitter, "h", br#"{"message":"hi"}"#, t(1), "r1").unwrap();
        assert_eq!(a.object_id, b.object_id);
        assert!(!a.deduplicated && b.deduplicated);
        assert_eq!(store.total_count(), 1);
    }

    #[test]
    fn later_day_keeps_a_second_copy() {
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::open(dir.path()).unwrap();
        store.put(Platform::XTwitter, "h", b"{}", t(1), "r1").unwrap();
        let again = store.put(Platform::XTwitter, "h", b"{}", t(2), "r2").unwrap();
        assert!(!again.deduplicated);
        assert_eq!(store.total_count(), 2);
        assert_eq!(store.get(&again.object_id).unwrap().collected_at, t(1));
    }

    #[test]
    fn one_byte_difference_gives_distinct_ids() {
        assert_ne!(object_id(br#"{"a":1}"#), object_id(br#"{"a":2}"#));
    }

    #[test]
    fn empty_object_hash() {
        // sha256 of the two bytes "{}", computed with coreutils sha256sum
        assert_eq!(object_id(b"{}"), "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a");
    }

    #[test]
    fn rejects_invalid_json() {
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::open(dir.path()).unwrap();
        assert!(matches!(store.put(Platform::Tiktok, "h", b"{not json", t(1), "r"), Err(RawStoreError::InvalidJson(_))));
        assert!(matches!(store.put(Platform::Tiktok, "h", b"", t(1), "r"), Err(RawStoreError::Empty)));
        assert_eq!(store.total_count(), 0);
    }

    #[test]
    fn get_unknown_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::open(dir.path()).unwrap();
        assert!(matches!(store.get("00"), Err(RawStoreError::NotFound(_))));
    }

    #[test]
    fn scan_filters_and_orders() {
        let dir = tempfile::tempdir().unwrap();
        let store = RawStore::open(dir.path()).unwrap();
        for i in 0..10 {
            store.put(Platform::Tiktok, "h", format!("{{\"id\":{i}}}").as_bytes(), t(1 + i % 3), "r").unwrap();
        }
        for i in 0..5 {
            store.put(Platform::Youtube, "h", format!("{{\"id\":{i}}}").as_bytes(), t(1), "r").unwrap();
        }
        let tiktok: Vec<_> = store.scan(&PartitionFilter::platform(Platform::Tiktok)).map(Result::unwrap).collect();
        assert_eq!(tiktok.len(), 10);
        assert!(tiktok.iter().all(|o| o.platform == Platform::Tiktok));
        let all: Vec<_> = store.scan(&PartitionFilter::all()).map(|o| o.unwrap().object_id).collect();
        assert_eq!(all.len(), store.manifests().values().map(|m| m.count).sum::<usize>());
        let again: Vec<_> = store.scan(&PartitionFilter::all()).map(|o| o.unwrap().object_id).collect();
        assert_eq!(all, again);
        assert!(store.verify().unwrap().is_empty());
    }

    #[test]
    fn survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let payload = r#"{"desc":"café","n":[1,2,3]}"#.as_bytes();
        let id = {
            let store = RawStore::open(dir.path()).unwrap();
            store.put(Platform::Tiktok, "h", payload, t(4), "r").unwrap().object_id
        };
        let store = RawStore::open(dir.path()).unwrap();
        assert_eq!(store.get(&id).unwrap().payload, payload.to_vec());
        let path = dir.path().join("raw/tiktok/2024-03-04").join(format!("{id}.json"));
        assert!(path.exists());
        let manifest: Manifest = serde_json::from_slice(&fs::read(path.with_file_name(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest.count, 1);
        assert_eq!(manifest.ids, vec![id]);
    }
}
