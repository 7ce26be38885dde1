//! Per-platform rate limiting.

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{ConnectorError, FetchPage, FetchRequest, PlatformConnector};
use crate::clock::SharedClock;
use crate::platform::Platform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThrottlePolicy {
    pub max_requests_per_minute: u32,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
    pub max_attempts: u32,
}

impl Default for ThrottlePolicy {
    fn default() -> Self {
        Self { max_requests_per_minute: 60, backoff_initial_ms: 1_000, backoff_max_ms: 60_000, max_attempts: 8 }
    }
}

impl ThrottlePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_requests_per_minute == 0 {
            return Err("rate must be positive".into());
        }
        if self.max_attempts == 0 {
            return Err("max_attempts must be positive".into());
        }
        Ok(())
    }

    /// Delay before retry number `attempt` (0-based): initial * 2^attempt,
    /// capped at the maximum.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_initial_ms.saturating_mul(1u64.checked_shl(attempt).unwrap_or(u64::MAX));
        Duration::from_millis(ms.min(self.backoff_max_ms))
    }

    pub fn backoff_schedule(&self) -> Vec<Duration> {
        (0..self.max_attempts).map(|a| self.backoff(a)).collect()
    }
}

/// Token bucket with capacity one: requests are spaced at least
/// `60 / rate` seconds apart, so no 60-second window holds more than `rate`.
#[derive(Debug)]
pub struct TokenBucket {
    interval: chrono::Duration,
    next_free: Mutex<Option<DateTime<Utc>>>,
}

impl TokenBucket {
    pub fn new(max_requests_per_minute: u32) -> Self {
        let micros = 60_000_000 / i64::from(max_requests_per_minute.max(1));
        Self { interval: chrono::Duration::microseconds(micros), next_free: Mutex::new(None) }
    }

    /// Reserves the next slot and returns how long the caller must wait.
    pub fn reserve(&self, now: DateTime<Utc>) -> Duration {
        let mut next = self.next_free.lock();
        let slot = match *next {
            Some(t) if t > now => t,
            _ => now,
        };
        *next = Some(slot + self.interval);
        (slot - now).to_std().unwrap_or_default()
    }

    pub fn acquire(&self, clock: &SharedClock) {
        let wait = self.reserve(clock.now());
        if !wait.is_zero() {
            clock.sleep(wait);
        }
    }
}

/// Wraps a connector with one token bucket per platform.
pub struct RateLimitedConnector<C> {
    inner: C,
    clock: SharedClock,
    buckets: BTreeMap<Platform, TokenBucket>,
}

impl<C: PlatformConnector> RateLimitedConnector<C> {
    pub fn new(inner: C, clock: SharedClock, policies: &BTreeMap<Platform, ThrottlePolicy>) -> Self {
        let buckets = Platform::ALL
            .iter()
            .map(|p| {
                let rate = policies.get(p).copied().unwrap_or_default().max_requests_per_minute;
                (*p, TokenBucket::new(rate))
            })
            .collect();
        Self { inner, clock, buckets }
    }
}

impl<C: PlatformConnector> PlatformConnector for RateLimitedConnector<C> {
    fn fetch(&self, req: &FetchRequest) -> Result<FetchPage, ConnectorError> {
        if let Some(bucket) = self.buckets.get(&req.platform) {
            bucket.acquire(&self.clock);
        }
        self.inner.fetch(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn default_backoff_doubles_and_caps() {
        let p = ThrottlePolicy::default();
        assert_eq!(p.max_requests_per_minute, 60);
        let secs: Vec<u64> = p.backoff_schedule().iter().map(|d| d.as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4, 8, 16, 32, 60, 60]);
        assert_eq!(p.backoff(200), Duration::from_secs(60));
    }

    #[test]
    fn zero_rate_rejected() {
        let p = ThrottlePolicy { max_requests_per_minute: 0, ..ThrottlePolicy::default() };
        assert_eq!(p.validate().unwrap_err(), "rate must be positive");
    }

    #[test]
    fn bucket_spaces_requests() {
        let bucket = TokenBucket::new(60);
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        assert_eq!(bucket.reserve(t0), Duration::ZERO);
        assert_eq!(bucket.reserve(t0), Duration::from_secs(1));
        assert_eq!(bucket.reserve(t0), Duration::from_secs(2));
        let later = t0 + chrono::Duration::seconds(10);
        assert_eq!(bucket.reserve(later), Duration::ZERO);
    }
}
