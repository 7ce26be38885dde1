//! Seed registry: the curated list of tracked entities, their annotations and
//! per-platform handles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io;

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::platform::{MainType, Platform};

/// Exact column order of the seed CSV format.
pub const SEED_CSV_HEADER: [&str; 15] = [
    "id",
    "name",
    "main_type",
    "sub_type",
    "federal_party",
    "provincial_party",
    "province",
    "riding",
    "country",
    "platform",
    "handle",
    "verified",
    "followers",
    "following",
    "collection_tags",
];

pub const UNAFFILIATED: &str = "unaffiliated";

const DEFAULT_PARTY_MAP: &str = include_str!("../data/party_map.csv");

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: expected {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("no eligibility rule defined for platform {0}")]
    NoEligibilityRule(Platform),
    #[error("unknown seed {0:?}")]
    UnknownSeed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformHandle {
    pub platform: Platform,
    pub handle: String,
    pub verified: bool,
    pub followers: Option<u64>,
    pub following: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntity {
    pub id: String,
    pub name: String,
    pub main_type: MainType,
    pub sub_type: Option<String>,
    pub federal_party: Option<String>,
    pub provincial_party: Option<String>,
    pub province: Option<String>,
    pub riding: Option<String>,
    pub country: String,
    pub handles: BTreeMap<Platform, PlatformHandle>,
    pub collection_tags: BTreeSet<String>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub last_activity_at: BTreeMap<Platform, DateTime<Utc>>,
}

impl SeedEntity {
    pub fn handle_on(&self, platform: Platform) -> Option<&PlatformHandle> {
        self.handles.get(&platform)
    }

    /// Entity-level attributes, ignoring handles and bookkeeping timestamps.
    fn same_attributes(&self, other: &SeedEntity) -> bool {
        self.name == other.name
            && self.main_type == other.main_type
            && self.sub_type == other.sub_type
            && self.federal_party == other.federal_party
            && self.provincial_party == other.provincial_party
            && self.province == other.province
            && self.riding == other.riding
            && self.country == other.country
            && self.collection_tags == other.collection_tags
    }
}

/// Provincial to federal party lookup applied at import.
#[derive(Debug, Clone)]
pub struct PartyMap {
    map: HashMap<String, String>,
}

impl PartyMap {
    pub fn from_csv(text: &str) -> Result<Self, SeedError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut map = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            if let (Some(p), Some(f)) = (rec.get(0), rec.get(1)) {
                map.insert(p.trim().to_lowercase(), f.trim().to_string());
            }
        }
        Ok(Self { map })
    }

    pub fn federal_for(&self, provincial: &str) -> String {
        self.map
            .get(&provincial.trim().to_lowercase())
            .cloned()
            .unwrap_or_else(|| UNAFFILIATED.to_string())
    }
}

impl Default for PartyMap {
    fn default() -> Self {
        Self::from_csv(DEFAULT_PARTY_MAP).expect("bundled party map is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    /// 1-based line number in the source file (the header is line 1).
    pub row: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected: Vec<RowRejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EligibilityRule {
    FollowerThreshold,
    Ratio,
    PoliticalContent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityProfile {
    pub platform: Platform,
    pub followers: u64,
    pub following: u64,
    pub political_content_majority: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eligibility {
    pub eligible: bool,
    pub failed_rules: Vec<EligibilityRule>,
}

/// Influencer inclusion rules: platform follower floor, followers at least
/// twice following, and a political content majority.
pub fn check_influencer_eligibility(p: &EligibilityProfile) -> Result<Eligibility, SeedError> {
    let floor = match p.platform {
        Platform::XTwitter | Platform::Tiktok => 10_000,
        Platform::Facebook | Platform::Instagram | Platform::Youtube | Platform::Bluesky => 5_000,
        Platform::Telegram => return Err(SeedError::NoEligibilityRule(p.platform)),
    };
    let mut failed_rules = Vec::new();
    if p.followers < floor {
        failed_rules.push(EligibilityRule::FollowerThreshold);
    }
    if (p.followers as u128) < 2 * p.following as u128 {
        failed_rules.push(EligibilityRule::Ratio);
    }
    if !p.political_content_majority {
        failed_rules.push(EligibilityRule::PoliticalContent);
    }
    Ok(Eligibility { eligible: failed_rules.is_empty(), failed_rules })
}

/// True when the entity was active on any platform within the last 365 days
/// (inclusive) of `now`.
pub fn check_activity_retention(entity: &SeedEntity, now: DateTime<Utc>) -> bool {
    entity
        .last_activity_at
        .values()
        .any(|t| now.signed_duration_since(*t) <= Duration::days(365))
}

struct ParsedRow {
    entity: SeedEntity,
    handle: PlatformHandle,
}

#[derive(Default)]
struct Inner {
    entities: BTreeMap<String, SeedEntity>,
    by_handle: HashMap<(Platform, String), String>,
}

impl Inner {
    fn insert_row(&mut self, row: ParsedRow) -> Result<(), String> {
        let ParsedRow { entity, handle } = row;
        let key = (handle.platform, handle.handle.to_lowercase());
        if let Some(owner) = self.by_handle.get(&key) {
            if owner != &entity.id {
                return Err(format!("handle already registered to {owner}"));
            }
        }
        let id = entity.id.clone();
        match self.entities.get_mut(&id) {
            Some(existing) => {
                if !existing.same_attributes(&entity) || existing.handles.contains_key(&handle.platform)
                {
                    return Err("duplicate id".to_string());
                }
                existing.handles.insert(handle.platform, handle);
            }
            None => {
                let mut entity = entity;
                entity.handles.insert(handle.platform, handle);
                self.entities.insert(id.clone(), entity);
            }
        }
        self.by_handle.insert(key, id);
        Ok(())
    }
}

/// Read-mostly registry; writers are serialized behind the lock.
pub struct SeedRegistry {
    inner: RwLock<Inner>,
    parties: PartyMap,
}

impl Default for SeedRegistry {
    fn default() -> Self {
        Self::new(PartyMap::default())
    }
}

fn opt(s: &str) -> Option<String> {
    let s = s.trim();
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_count(s: &str, field: &str) -> Result<Option<u64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.replace(['_', ','], "")
        .parse::<u64>()
        .map(Some)
        .map_err(|_| format!("bad {field} count {s:?}"))
}

impl SeedRegistry {
    pub fn new(parties: PartyMap) -> Self {
        Self { inner: RwLock::new(Inner::default()), parties }
    }

    fn parse_row(&self, rec: &csv::StringRecord, now: DateTime<Utc>) -> Result<ParsedRow, String> {
        if rec.len() != SEED_CSV_HEADER.len() {
            return Err(format!("expected {} fields, found {}", SEED_CSV_HEADER.len(), rec.len()));
        }
        let f = |i: usize| rec.get(i).unwrap_or("");
        let id = f(0).trim();
        if id.is_empty() {
            return Err("empty id".into());
        }
        let name = f(1).trim();
        if name.is_empty() {
            return Err("empty name".into());
        }
        let main_type: MainType = f(2).parse().map_err(|e: crate::platform::UnknownMainType| e.to_string())?;
        let sub_type = opt(f(3)).map(|s| if main_type == MainType::News { s.to_lowercase() } else { s });
        let province = opt(f(6));
        if main_type == MainType::News {
            match sub_type.as_deref() {
                None | Some("national") => {}
                Some("local") => {
                    if province.is_none() {
                        return Err("local news requires province".into());
                    }
                }
                Some(other) => return Err(format!("news sub_type must be national or local, got {other:?}")),
            }
        }
        let provincial_party = opt(f(5));
        let federal_party = opt(f(4))
            .or_else(|| provincial_party.as_deref().map(|p| self.parties.federal_for(p)));
        let platform: Platform = f(9).parse().map_err(|e: crate::platform::UnknownPlatform| e.to_string())?;
        let handle = f(10).trim();
        if handle.is_empty() {
            return Err("empty handle".into());
        }
        let verified = match f(11).trim().to_ascii_lowercase().as_str() {
            "" | "false" | "0" | "no" => false,
            "true" | "1" | "yes" => true,
            other => return Err(format!("bad verified flag {other:?}")),
        };
        let followers = parse_count(f(12), "followers")?;
        let following = parse_count(f(13), "following")?;
        let collection_tags = f(14)
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect();
        Ok(ParsedRow {
            entity: SeedEntity {
                id: id.to_string(),
                name: name.to_string(),
                main_type,
                sub_type,
                federal_party,
                provincial_party,
                province,
                riding: opt(f(7)),
                country: f(8).trim().to_string(),
                handles: BTreeMap::new(),
                collection_tags,
                created_at: now,
                last_activity_at: BTreeMap::new(),
            },
            handle: PlatformHandle {
                platform,
                handle: handle.to_string(),
                verified,
                followers,
                following,
            },
        })
    }

    /// Validates and inserts every row of a seed CSV. Each row is inserted
    /// whole or rejected with a reason.
    pub fn import_seeds<R: io::Read>(&self, source: R, now: DateTime<Utc>) -> Result<LoadReport, SeedError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(source);
        let header = rdr.headers()?.clone();
        let found: Vec<&str> = header.iter().map(str::trim).collect();
        if found != SEED_CSV_HEADER {
            return Err(SeedError::Header {
                expected: SEED_CSV_HEADER.join(","),
                found: found.join(","),
            });
        }
        let mut report = LoadReport::default();
        let mut inner = self.inner.write();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec.position().map(|p| p.line()).unwrap_or(0);
            let outcome = self.parse_row(&rec, now).and_then(|parsed| inner.insert_row(parsed));
            match outcome {
                Ok(()) => report.accepted += 1,
                Err(reason) => report.rejected.push(RowRejection { row, reason }),
            }
        }
        Ok(report)
    }

    pub fn import_path(&self, path: &std::path::Path, now: DateTime<Utc>) -> Result<LoadReport, SeedError> {
        let file = std::fs::File::open(path)?;
        self.import_seeds(io::BufReader::new(file), now)
    }

    /// Checks a seed file without touching the registry.
    pub fn validate<R: io::Read>(source: R, parties: PartyMap) -> Result<LoadReport, SeedError> {
        SeedRegistry::new(parties).import_seeds(source, Utc::now())
    }

    /// Writes the registry in the import CSV format, one row per handle,
    /// ordered by id then platform.
    pub fn export_csv<W: io::Write>(&self, out: W) -> Result<(), SeedError> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        w.write_record(SEED_CSV_HEADER)?;
        let inner = self.inner.read();
        for e in inner.entities.values() {
            let tags = e.collection_tags.iter().cloned().collect::<Vec<_>>().join(";");
            for h in e.handles.values() {
                let followers = h.followers.map(|n| n.to_string()).unwrap_or_default();
                let following = h.following.map(|n| n.to_string()).unwrap_or_default();
                w.write_record([
                    e.id.as_str(),
                    e.name.as_str(),
                    e.main_type.as_str(),
                    e.sub_type.as_deref().unwrap_or(""),
                    e.federal_party.as_deref().unwrap_or(""),
                    e.provincial_party.as_deref().unwrap_or(""),
                    e.province.as_deref().unwrap_or(""),
                    e.riding.as_deref().unwrap_or(""),
                    e.country.as_str(),
                    h.platform.as_str(),
                    h.handle.as_str(),
                    if h.verified { "true" } else { "false" },
                    followers.as_str(),
                    following.as_str(),
                    tags.as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn export_string(&self) -> String {
        let mut buf = Vec::new();
        self.export_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn get(&self, id: &str) -> Option<SeedEntity> {
        self.inner.read().entities.get(id).cloned()
    }

    pub fn find_by_handle(&self, platform: Platform, handle: &str) -> Option<SeedEntity> {
        let inner = self.inner.read();
        inner
            .by_handle
            .get(&(platform, handle.to_lowercase()))
            .and_then(|id| inner.entities.get(id))
            .cloned()
    }

    /// Snapshot of all entities ordered by id.
    pub fn entities(&self) -> Vec<SeedEntity> {
        self.inner.read().entities.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Handles registered on `platform`, ordered by seed id.
    pub fn handles_on(&self, platform: Platform) -> Vec<(String, String)> {
        self.inner
            .read()
            .entities
            .values()
            .filter_map(|e| e.handles.get(&platform).map(|h| (e.id.clone(), h.handle.clone())))
            .collect()
    }

    pub fn remove(&self, id: &str) -> Result<SeedEntity, SeedError> {
        let mut inner = self.inner.write();
        let removed = inner.entities.remove(id).ok_or_else(|| SeedError::UnknownSeed(id.to_string()))?;
        inner.by_handle.retain(|_, owner| owner != id);
        Ok(removed)
    }

    /// Advances the per-platform activity timestamp; never moves it backwards.
    pub fn record_activity(&self, platform: Platform, handle: &str, at: DateTime<Utc>) {
        let mut inner = self.inner.write();
        let Some(id) = inner.by_handle.get(&(platform, handle.to_lowercase())).cloned() else {
            return;
        };
        if let Some(e) = inner.entities.get_mut(&id) {
            let slot = e.last_activity_at.entry(platform).or_insert(at);
            if *slot < at {
                *slot = at;
            }
        }
    }

    pub fn distribution_report(&self) -> DistributionReport {
        DistributionReport::from_entities(&self.entities())
    }
}

/// Per-(platform, type) counts of entities holding a handle, with column
/// percentages against each type's population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub populations: BTreeMap<MainType, u64>,
    pub counts: BTreeMap<Platform, BTreeMap<MainType, u64>>,
}

impl DistributionReport {
    pub fn from_entities(entities: &[SeedEntity]) -> Self {
        let mut populations: BTreeMap<MainType, u64> = MainType::ALL.iter().map(|t| (*t, 0)).collect();
        let mut counts: BTreeMap<Platform, BTreeMap<MainType, u64>> = Platform::ALL
            .iter()
            .map(|p| (*p, MainType::ALL.iter().map(|t| (*t, 0)).collect()))
            .collect();
        for e in entities {
            *populations.entry(e.main_type).or_default() += 1;
            for p in e.handles.keys() {
                *counts.entry(*p).or_default().entry(e.main_type).or_default() += 1;
            }
        }
        Self { populations, counts }
    }

    pub fn count(&self, platform: Platform, main_type: MainType) -> u64 {
        self.counts.get(&platform).and_then(|r| r.get(&main_type)).copied().unwrap_or(0)
    }

    pub fn percentage(&self, platform: Platform, main_type: MainType) -> Option<f64> {
        let pop = self.populations.get(&main_type).copied().unwrap_or(0);
        (pop > 0).then(|| self.count(platform, main_type) as f64 / pop as f64 * 100.0)
    }

    pub fn cell(&self, platform: Platform, main_type: MainType) -> String {
        let count = self.count(platform, main_type);
        match self.percentage(platform, main_type) {
            Some(pct) => render_count_pct(count, pct),
            None => format!("{} (—)", group_digits(count, ',')),
        }
    }

    pub fn row_total(&self, platform: Platform) -> u64 {
        MainType::ALL.iter().map(|t| self.count(platform, *t)).sum()
    }

    pub fn column_total(&self, main_type: MainType) -> u64 {
        Platform::ALL.iter().map(|p| self.count(*p, main_type)).sum()
    }

    /// Renders the report as a pipe table with a totals row and column.
    pub fn render(&self) -> String {
        let mut header = vec!["Platform".to_string()];
        header.extend(MainType::ALL.iter().map(|t| format!("# {} (%)", t.column_label())));
        header.push("Total".into());
        let mut rows = vec![header];
        for p in Platform::ALL {
            let mut row = vec![p.display_name().to_string()];
            row.extend(MainType::ALL.iter().map(|t| self.cell(p, *t)));
            row.push(group_digits(self.row_total(p), ','));
            rows.push(row);
        }
        let mut total = vec!["Total".to_string()];
        total.extend(MainType::ALL.iter().map(|t| group_digits(self.column_total(*t), ',')));
        total.push(group_digits(Platform::ALL.iter().map(|p| self.row_total(*p)).sum(), ','));
        rows.push(total);
        render_pipe_table(&rows)
    }
}

/// `1459, 73.096` → `"1,459 (73.1%)"`.
pub fn render_count_pct(count: u64, pct: f64) -> String {
    format!("{} ({:.1}%)", group_digits(count, ','), pct)
}

/// Groups decimal digits in threes with `sep`.
pub fn group_digits(n: u64, sep: char) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(sep);
        }
        out.push(ch);
    }
    out
}

pub fn render_pipe_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (ri, row) in rows.iter().enumerate() {
        out.push('|');
        for (c, w) in widths.iter().enumerate() {
            let cell = row.get(c).map(String::as_str).unwrap_or("");
            let pad = w - cell.chars().count();
            out.push(' ');
            out.push_str(cell);
            out.extend(std::iter::repeat_n(' ', pad));
            out.push_str(" |");
        }
        out.push('\n');
        if ri == 0 {
            out.push('|');
            for w in &widths {
                out.push_str(&"-".repeat(w + 2));
                out.push('|');
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    const HEADER: &str = "id,name,main_type,sub_type,federal_party,provincial_party,province,riding,country,platform,handle,verified,followers,following,collection_tags\n";

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
    }

    fn import(body: &str) -> (SeedRegistry, LoadReport) {
        let reg = SeedRegistry::default();
        let report = reg.import_seeds(format!("{HEADER}{body}").as_bytes(), now()).unwrap();
        (reg, report)
    }

    #[test]
    fn three_valid_rows() {
        let (reg, report) = import(
            "mp-001,Ann,politician,,Liberal,,ON,Ottawa Centre,CA,x_twitter,ann,true,100,10,federal\n\
             mp-001,Ann,politician,,Liberal,,ON,Ottawa Centre,CA,instagram,ann.ig,false,,,federal\n\
             news-1,Daily,news,national,,,,,CA,youtube,daily,true,5000,1,\n",
        );
        assert_eq!(report, LoadReport { accepted: 3, rejected: vec![] });
        assert_eq!(reg.len(), 2);
        assert_eq!(reg.get("mp-001").unwrap().handles.len(), 2);
    }

    #[test]
    fn duplicate_id_rejected() {
        let (reg, report) = import(
            "mp-001,Ann,politician,,Liberal,,ON,,CA,x_twitter,ann,true,,,\n\
             mp-001,Bob,politician,,NDP,,BC,,CA,x_twitter,bob,true,,,\n",
        );
        assert_eq!(report.accepted, 1);
        assert_eq!(report.rejected, vec![RowRejection { row: 3, reason: "duplicate id".into() }]);
        assert_eq!(reg.get("mp-001").unwrap().name, "Ann");
    }

    #[test]
    fn local_news_requires_province() {
        let (_, report) = import("n-1,Local Paper,news,local,,,,,CA,facebook,lp,false,,,\n");
        assert_eq!(report.accepted, 0);
        assert_eq!(report.rejected[0].reason, "local news requires province");
    }

    #[test]
    fn unknown_platform_rejected() {
        let (reg, report) = import("x-1,X,influencer,,,,,,CA,myspace,xx,false,,,\n");
        assert_eq!(report.accepted, 0);
        assert!(report.rejected[0].reason.contains("unknown platform"));
        assert!(reg.is_empty());
    }

    #[test]
    fn bad_header_is_an_error() {
        let reg = SeedRegistry::default();
        let err = reg.import_seeds("id,name\n".as_bytes(), now()).unwrap_err();
        assert!(matches!(err, SeedError::Header { .. }));
    }

    #[test]
    fn provincial_party_maps_to_federal() {
        let (reg, _) = import(
            "p-1,Doug,politician,,,Progressive Conservative Party of Ontario,ON,,CA,x_twitter,doug,true,,,\n\
             p-2,Zed,politician,,,Rhinoceros Party,QC,,CA,x_twitter,zed,true,,,\n",
        );
        assert_eq!(reg.get("p-1").unwrap().federal_party.as_deref(), Some("Conservative"));
        assert_eq!(reg.get("p-2").unwrap().federal_party.as_deref(), Some(UNAFFILIATED));
    }

    #[test]
    fn reimport_is_byte_identical() {
        let body = "b,Bee,influencer,,,,,,CA,tiktok,bee,false,20000,5,\"a;b\"\n\
                    a,\"Ay, Jr.\",cso,advocacy,,,,,CA,bluesky,ay,true,,,\n";
        let (first, _) = import(body);
        let (second, _) = import(body);
        let exported = first.export_string();
        assert_eq!(exported, second.export_string());
        let third = SeedRegistry::default();
        third.import_seeds(exported.as_bytes(), now()).unwrap();
        assert_eq!(third.export_string(), exported);
    }

    fn profile(platform: Platform, followers: u64, following: u64, political: bool) -> EligibilityProfile {
        EligibilityProfile { platform, followers, following, political_content_majority: political }
    }

    #[test]
    fn eligibility_examples() {
        let ok = check_influencer_eligibility(&profile(Platform::XTwitter, 10_000, 4_000, true)).unwrap();
        assert!(ok.eligible);
        let ig = check_influencer_eligibility(&profile(Platform::Instagram, 4_999, 10, true)).unwrap();
        assert_eq!(ig.failed_rules, vec![EligibilityRule::FollowerThreshold]);
        let ratio = check_influencer_eligibility(&profile(Platform::XTwitter, 10_000, 6_000, true)).unwrap();
        assert_eq!(ratio.failed_rules, vec![EligibilityRule::Ratio]);
        assert!(matches!(
            check_influencer_eligibility(&profile(Platform::Telegram, 1, 0, true)),
            Err(SeedError::NoEligibilityRule(Platform::Telegram))
        ));
    }

    fn entity_with_activity(times: &[DateTime<Utc>]) -> SeedEntity {
        let (reg, _) = import("s,S,influencer,,,,,,CA,x_twitter,s,false,,,\n");
        let mut e = reg.get("s").unwrap();
        for (p, t) in Platform::ALL.iter().zip(times) {
            e.last_activity_at.insert(*p, *t);
        }
        e
    }

    #[test]
    fn activity_retention() {
        assert!(check_activity_retention(&entity_with_activity(&[now() - Duration::days(100)]), now()));
        assert!(!check_activity_retention(&entity_with_activity(&[]), now()));
        assert!(check_activity_retention(&entity_with_activity(&[now() - Duration::days(365)]), now()));
        assert!(!check_activity_retention(
            &entity_with_activity(&[now() - Duration::days(365) - Duration::seconds(1)]),
            now()
        ));
    }

    #[test]
    fn distribution_cells() {
        let (reg, _) = import(
            "p1,A,politician,,,,,,CA,x_twitter,p1,true,,,\n\
             p2,B,politician,,,,,,CA,x_twitter,p2,true,,,\n\
             p3,C,politician,,,,,,CA,x_twitter,p3,true,,,\n\
             p4,D,politician,,,,,,CA,instagram,p4,true,,,\n\
             i1,E,influencer,,,,,,CA,tiktok,i1,true,,,\n",
        );
        let report = reg.distribution_report();
        assert_eq!(report.cell(Platform::XTwitter, MainType::Politician), "3 (75.0%)");
        assert_eq!(report.cell(Platform::Telegram, MainType::Influencer), "0 (0.0%)");
        assert_eq!(report.cell(Platform::Telegram, MainType::News), "0 (—)");
        assert_eq!(report.column_total(MainType::Politician), 4);
    }

    #[test]
    fn table_one_cell_rendering() {
        let pop = (1459.0f64 / 0.731).round();
        assert_eq!(pop, 1996.0);
        assert_eq!(render_count_pct(1459, 1459.0 / pop * 100.0), "1,459 (73.1%)");
    }

    #[test]
    fn empty_registry_report() {
        let report = SeedRegistry::default().distribution_report();
        for p in Platform::ALL {
            for t in MainType::ALL {
                assert_eq!(report.cell(p, t), "0 (—)");
            }
        }
    }

    #[test]
    fn digit_grouping() {
        assert_eq!(group_digits(0, ','), "0");
        assert_eq!(group_digits(999, ','), "999");
        assert_eq!(group_digits(1000, ','), "1,000");
        assert_eq!(group_digits(7_322_094, ' '), "7 322 094");
    }
}
