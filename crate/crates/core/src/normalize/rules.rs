//! Declarative per-platform mapping rules, one TOML document per platform.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::platform::Platform;

pub const METRICS: [&str; 4] = ["likes", "shares", "comments", "views"];

const BUNDLED: [(&str, &str); 7] = [
    ("x_twitter", include_str!("../../rules/x_twitter.toml")),
    ("instagram", include_str!("../../rules/instagram.toml")),
    ("youtube", include_str!("../../rules/youtube.toml")),
    ("tiktok", include_str!("../../rules/tiktok.toml")),
    ("facebook", include_str!("../../rules/facebook.toml")),
    ("telegram", include_str!("../../rules/telegram.toml")),
    ("bluesky", include_str!("../../rules/bluesky.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("rule file {name}: {source}")]
    Parse { name: String, source: toml::de::Error },
    #[error("rule for {platform}: {reason}")]
    Invalid { platform: Platform, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comments: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<String>,
    /// Metrics the platform does not expose at all.
    #[serde(default)]
    pub absent: Vec<String>,
}

impl EngagementMap {
    pub fn path(&self, metric: &str) -> Option<&str> {
        match metric {
            "likes" => self.likes.as_deref(),
            "shares" => self.shares.as_deref(),
            "comments" => self.comments.as_deref(),
            "views" => self.views.as_deref(),
            _ => None,
        }
    }

    pub fn set(&mut self, metric: &str, path: Option<String>) {
        match metric {
            "likes" => self.likes = path,
            "shares" => self.shares = path,
            "comments" => self.comments = path,
            "views" => self.views = path,
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub platform: Platform,
    pub schema_version: u32,
    pub id_field: String,
    pub author_field: String,
    pub text_fields: Vec<String>,
    pub published_at_field: String,
    /// `rfc3339`, `unix_seconds`, `unix_millis`, or a chrono format string.
    pub timestamp_format: String,
    #[serde(default)]
    pub media_fields: Vec<String>,
    #[serde(default)]
    pub mention_prefix: Option<String>,
    #[serde(default)]
    pub share_ref_field: Option<String>,
    pub engagement: EngagementMap,
}

/// The subset of a rule a connector needs to know about the raw schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformSchemaProfile {
    pub platform: Platform,
    pub text_fields: Vec<String>,
    pub id_field: String,
    pub published_at_field: String,
    pub timestamp_format: String,
    pub engagement_fields: BTreeMap<String, String>,
}

impl MappingRule {
    pub fn from_toml(name: &str, text: &str) -> Result<Self, RuleError> {
        let rule: MappingRule =
            toml::from_str(text).map_err(|source| RuleError::Parse { name: name.to_string(), source })?;
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        let bad = |reason: String| Err(RuleError::Invalid { platform: self.platform, reason });
        if self.id_field.is_empty() || self.published_at_field.is_empty() {
            return bad("id_field and published_at_field must be set".into());
        }
        if self.text_fields.is_empty() {
            return bad("text_fields must not be empty".into());
        }
        for m in METRICS {
            let mapped = self.engagement.path(m).is_some();
            let absent = self.engagement.absent.iter().any(|a| a == m);
            if mapped == absent {
                return bad(format!("metric {m} must be either mapped or listed as absent"));
            }
        }
        if let Some(other) = self.engagement.absent.iter().find(|a| !METRICS.contains(&a.as_str())) {
            return bad(format!("unknown metric {other:?} in absent list"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("rule serializes")
    }

    pub fn profile(&self) -> PlatformSchemaProfile {
        PlatformSchemaProfile {
            platform: self.platform,
            text_fields: self.text_fields.clone(),
            id_field: self.id_field.clone(),
            published_at_field: self.published_at_field.clone(),
            timestamp_format: self.timestamp_format.clone(),
            engagement_fields: METRICS
                .iter()
                .filter_map(|m| self.engagement.path(m).map(|p| (m.to_string(), p.to_string())))
                .collect(),
        }
    }

    pub fn parse_timestamp(&self, v: &Value) -> Option<DateTime<Utc>> {
        parse_timestamp(&self.timestamp_format, v)
    }
}

pub(crate) fn parse_timestamp(format: &str, v: &Value) -> Option<DateTime<Utc>> {
    match format {
        "rfc3339" => DateTime::parse_from_rfc3339(v.as_str()?).ok().map(|t| t.with_timezone(&Utc)),
        "unix_seconds" => Utc.timestamp_opt(as_i64(v)?, 0).single(),
        "unix_millis" => Utc.timestamp_millis_opt(as_i64(v)?).single(),
        fmt => {
            let s = v.as_str()?;
            DateTime::parse_from_str(s, fmt)
                .map(|t| t.with_timezone(&Utc))
                .or_else(|_| NaiveDateTime::parse_from_str(s, fmt).map(|n| n.and_utc()))
                .ok()
        }
    }
}

fn as_i64(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Resolves a dotted path (`stats.diggCount`) inside a JSON document.
pub fn lookup<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |cur, key| match cur {
        Value::Object(map) => map.get(key),
        Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

/// The full rule set, keyed by platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: BTreeMap<Platform, MappingRule>,
}

impl RuleSet {
    pub fn bundled() -> Self {
        let rules = BUNDLED
            .iter()
            .map(|(name, text)| {
                let rule = MappingRule::from_toml(name, text).expect("bundled rules are valid");
                (rule.platform, rule)
            })
            .collect();
        Self { rules }
    }

    /// Loads every `*.toml` in `dir`; platforms without a file keep the
    /// bundled rule.
    pub fn load_dir(dir: &Path) -> Result<Self, RuleError> {
        let mut set = Self::bundled();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let rule = MappingRule::from_toml(&path.display().to_string(), &text)?;
            set.rules.insert(rule.platform, rule);
        }
        Ok(set)
    }

    pub fn get(&self, platform: Platform) -> Option<&MappingRule> {
        self.rules.get(&platform)
    }

    pub fn insert(&mut self, rule: MappingRule) {
        self.rules.insert(rule.platform, rule);
    }

    pub fn iter(&self) -> impl Iterator<Item = &MappingRule> {
        self.rules.values()
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bundled_rules_cover_every_platform() {
        let set = RuleSet::bundled();
        for p in Platform::ALL {
            let rule = set.get(p).unwrap();
            assert_eq!(rule.platform, p);
            let back = MappingRule::from_toml("rt", &rule.to_toml()).unwrap();
            assert_eq!(&back, rule);
        }
        assert_eq!(set.get(Platform::Tiktok).unwrap().text_fields, vec!["desc"]);
        assert_eq!(set.get(Platform::Youtube).unwrap().text_fields, vec!["title", "description"]);
        assert_eq!(set.get(Platform::XTwitter).unwrap().text_fields, vec!["message"]);
    }

    #[test]
    fn unmapped_metric_without_absent_marker_is_rejected() {
        let text = RuleSet::bundled().get(Platform::Youtube).unwrap().to_toml().replace("absent = [\"shares\"]", "absent = []");
        assert!(matches!(MappingRule::from_toml("yt", &text), Err(RuleError::Invalid { .. })));
    }

    #[test]
    fn timestamp_formats() {
        let expect = Utc.with_ymd_and_hms(2024, 1, 5, 12, 0, 0).unwrap();
        assert_eq!(parse_timestamp("rfc3339", &json!("2024-01-05T12:00:00Z")), Some(expect));
        assert_eq!(parse_timestamp("unix_seconds", &json!(1704456000)), Some(expect));
        assert_eq!(parse_timestamp("unix_seconds", &json!("1704456000")), Some(expect));
        assert_eq!(parse_timestamp("unix_millis", &json!(1704456000000i64)), Some(expect));
        assert_eq!(parse_timestamp("%Y-%m-%dT%H:%M:%S%z", &json!("2024-01-05T12:00:00+0000")), Some(expect));
        assert_eq!(parse_timestamp("rfc3339", &json!("not-a-date")), None);
    }

    #[test]
    fn dotted_lookup() {
        let doc = json!({"a": {"b": [10, {"c": 3}]}});
        assert_eq!(lookup(&doc, "a.b.1.c"), Some(&json!(3)));
        assert_eq!(lookup(&doc, "a.x"), None);
    }
}
