//! Platform connector abstraction. Live platform clients are not shipped; the
//! deterministic mock hub (in-process or over HTTP) is the only implementation.

pub mod http;
pub mod mock;
pub mod throttle;

use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::platform::Platform;

pub use mock::{FixtureDataset, GenerateOptions, MockConnector, MockDoc, MockPlatformHub, PlantedDrop, TopicBurst};
pub use throttle::{RateLimitedConnector, ThrottlePolicy, TokenBucket};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchRequest {
    pub platform: Platform,
    pub handle: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub cursor: Option<String>,
    pub page_size: usize,
}

impl FetchRequest {
    pub fn new(platform: Platform, handle: impl Into<String>, start: DateTime<Utc>, end: DateTime<Utc>, page_size: usize) -> Self {
        Self { platform, handle: handle.into(), start, end, cursor: None, page_size }
    }

    pub fn validate(&self) -> Result<(), ConnectorError> {
        if self.start >= self.end {
            return Err(ConnectorError::BadRequest("window start must precede end".into()));
        }
        if self.page_size == 0 {
            return Err(ConnectorError::BadRequest("page_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchPage {
    /// Raw platform documents, byte-exact as served.
    pub payloads: Vec<Vec<u8>>,
    pub next_cursor: Option<String>,
    /// Stamped by the connector on receipt, never read from the payload.
    pub collected_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConnectorError {
    #[error("account not found: {0}")]
    NotFound(String),
    #[error("throttled, retry after {retry_after:?}")]
    Throttled { retry_after: Duration },
    #[error("transient failure: {0}")]
    Retryable(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unsupported platform {0}")]
    Unsupported(Platform),
}

impl ConnectorError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ConnectorError::Throttled { .. } | ConnectorError::Retryable(_))
    }
}

pub trait PlatformConnector: Send + Sync {
    fn fetch(&self, req: &FetchRequest) -> Result<FetchPage, ConnectorError>;
}

impl<C: PlatformConnector + ?Sized> PlatformConnector for std::sync::Arc<C> {
    fn fetch(&self, req: &FetchRequest) -> Result<FetchPage, ConnectorError> {
        (**self).fetch(req)
    }
}

/// Opaque pagination token: base64 of `published_at|native_id` of the last
/// item served.
pub(crate) fn encode_cursor(published_at: DateTime<Utc>, native_id: &str) -> String {
    URL_SAFE_NO_PAD.encode(format!("{}|{}", published_at.to_rfc3339(), native_id))
}

pub(crate) fn decode_cursor(token: &str) -> Option<(DateTime<Utc>, String)> {
    let bytes = URL_SAFE_NO_PAD.decode(token).ok()?;
    let text = String::from_utf8(bytes).ok()?;
    let (ts, id) = text.split_once('|')?;
    let ts = DateTime::parse_from_rfc3339(ts).ok()?.with_timezone(&Utc);
    Some((ts, id.to_string()))
}
