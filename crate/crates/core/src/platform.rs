//! Platform and actor-type enumerations shared by every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    XTwitter,
    Instagram,
    Youtube,
    Tiktok,
    Facebook,
    Telegram,
    Bluesky,
}

impl Platform {
    /// Row order used by the entity and post distribution reports.
    pub const ALL: [Platform; 7] = [
        Platform::XTwitter,
        Platform::Instagram,
        Platform::Youtube,
        Platform::Tiktok,
        Platform::Facebook,
        Platform::Telegram,
        Platform::Bluesky,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::XTwitter => "x_twitter",
            Platform::Instagram => "instagram",
            Platform::Youtube => "youtube",
            Platform::Tiktok => "tiktok",
            Platform::Facebook => "facebook",
            Platform::Telegram => "telegram",
            Platform::Bluesky => "bluesky",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Platform::XTwitter => "X/Twitter",
            Platform::Instagram => "Instagram",
            Platform::Youtube => "YouTube",
            Platform::Tiktok => "TikTok",
            Platform::Facebook => "Facebook",
            Platform::Telegram => "Telegram",
            Platform::Bluesky => "Bluesky",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown platform {0:?}")]
pub struct UnknownPlatform(pub String);

impl FromStr for Platform {
    type Err = UnknownPlatform;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x_twitter" | "x" | "twitter" => Ok(Platform::XTwitter),
            "instagram" => Ok(Platform::Instagram),
            "youtube" => Ok(Platform::Youtube),
            "tiktok" => Ok(Platform::Tiktok),
            "facebook" => Ok(Platform::Facebook),
            "telegram" => Ok(Platform::Telegram),
            "bluesky" => Ok(Platform::Bluesky),
            _ => Err(UnknownPlatform(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainType {
    Politician,
    News,
    Influencer,
    Government,
    Cso,
    Foreign,
}

impl MainType {
    pub const ALL: [MainType; 6] = [
        MainType::Politician,
        MainType::News,
        MainType::Influencer,
        MainType::Government,
        MainType::Cso,
        MainType::Foreign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MainType::Politician => "politician",
            MainType::News => "news",
            MainType::Influencer => "influencer",
            MainType::Government => "government",
            MainType::Cso => "cso",
            MainType::Foreign => "foreign",
        }
    }

    pub fn column_label(self) -> &'static str {
        match self {
            MainType::Politician => "Politician",
            MainType::News => "News",
            MainType::Influencer => "Influencer",
            MainType::Government => "Gov.",
            MainType::Cso => "CSO",
            MainType::Foreign => "Foreign",
        }
    }
}

impl fmt::Display for MainType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown main type {0:?}")]
pub struct UnknownMainType(pub String);

impl FromStr for MainType {
    type Err = UnknownMainType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "politician" => Ok(MainType::Politician),
            "news" => Ok(MainType::News),
            "influencer" => Ok(MainType::Influencer),
            "government" | "gov" => Ok(MainType::Government),
            "cso" => Ok(MainType::Cso),
            "foreign" => Ok(MainType::Foreign),
            _ => Err(UnknownMainType(s.to_string())),
        }
    }
}
