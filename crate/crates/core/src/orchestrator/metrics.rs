use std::collections::BTreeMap;

use parking_lot::Mutex;

pub const COUNTERS: [&str; 17] = [
    "fetched",
    "stored",
    "deduped",
    "rejected_invalid",
    "normalized",
    "quarantined",
    "indexed",
    "embedded",
    "fetch_requests",
    "fetch_retries",
    "throttled",
    "runs_success",
    "runs_partial",
    "runs_failed",
    "backfills_completed",
    "backfills_failed",
    "stage_ms_total",
];

/// Monotone counters. Gauges are computed by the owner at snapshot time.
#[derive(Debug)]
pub struct Metrics {
    counters: Mutex<BTreeMap<String, u64>>,
}

impl Default for Metrics {
    fn default() -> Self {
        Self { counters: Mutex::new(COUNTERS.iter().map(|c| (c.to_string(), 0)).collect()) }
    }
}

impl Metrics {
    pub fn add(&self, name: &str, by: u64) {
        *self.counters.lock().entry(name.to_string()).or_default() += by;
    }

    pub fn get(&self, name: &str) -> u64 {
        self.counters.lock().get(name).copied().unwrap_or(0)
    }

    pub fn counters(&self) -> BTreeMap<String, u64> {
        self.counters.lock().clone()
    }
}

/// `name value` lines, sorted by name.
pub fn render_text(snapshot: &BTreeMap<String, f64>) -> String {
    let mut out = String::new();
    for (k, v) in snapshot {
        if v.fract() == 0.0 && v.abs() < 1e15 {
            out.push_str(&format!("{k} {}\n", *v as i64));
        } else {
            out.push_str(&format!("{k} {v}\n"));
        }
    }
    out
}
