use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::index::{DocMeta, Filters};
use crate::normalize::{Metric, UnifiedPost};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementChange {
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub pct_change: f64,
}

/// Period-over-period change of the per-post mean of `metric` for posts
/// matching `group`. Periods are half-open. Posts where the platform does
/// not expose the metric are left out.
pub fn engagement_change<'a>(
    posts: impl IntoIterator<Item = &'a UnifiedPost>,
    group: &Filters,
    period_a: (DateTime<Utc>, DateTime<Utc>),
    period_b: (DateTime<Utc>, DateTime<Utc>),
    metric: Metric,
) -> Result<EngagementChange, AnalysisError> {
    let (mut sum_a, mut n_a, mut sum_b, mut n_b) = (0f64, 0usize, 0f64, 0usize);
    for p in posts {
        if !group.matches(&DocMeta::from(p)) {
            continue;
        }
        let Some(v) = p.engagement.get(metric) else { continue };
        let t = p.published_at;
        if t >= period_a.0 && t < period_a.1 {
            sum_a += v as f64;
            n_a += 1;
        }
        if t >= period_b.0 && t < period_b.1 {
            sum_b += v as f64;
            n_b += 1;
        }
    }
    if n_a == 0 || n_b == 0 {
        return Err(AnalysisError::InsufficientData);
    }
    let (mean_a, mean_b) = (sum_a / n_a as f64, sum_b / n_b as f64);
    if mean_a == 0.0 {
        return Err(AnalysisError::ZeroBaseline);
    }
    Ok(EngagementChange { metric, mean_a, mean_b, n_a, n_b, pct_change: pct_change(mean_a, mean_b) })
}

pub fn pct_change(mean_a: f64, mean_b: f64) -> f64 {
    (mean_b - mean_a) / mean_a * 100.0
}
