use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::normalize::{Metric, UnifiedPost};

/// Daily UTC buckets starting at `start`; missing days are explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub key: String,
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(key: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Self {
        Self { key: key.into(), start, values }
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.values.len() as i64)
    }

    pub fn at(&self, day: NaiveDate) -> Option<f64> {
        let off = (day - self.start).num_days();
        if off < 0 {
            return None;
        }
        self.values.get(off as usize).copied()
    }

    fn has_variance(&self) -> bool {
        self.values.windows(2).any(|w| w[0] != w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesValue {
    Count,
    Engagement(Metric),
}

/// Buckets posts by publication day over `[start, end)`.
pub fn daily_series<'a>(
    key: &str,
    posts: impl IntoIterator<Item = &'a UnifiedPost>,
    start: NaiveDate,
    end: NaiveDate,
    value: SeriesValue,
) -> TimeSeries {
    let n = (end - start).num_days().max(0) as usize;
    let mut values = vec![0.0; n];
    for p in posts {
        let off = (p.published_at.date_naive() - start).num_days();
        if off < 0 || off as usize >= n {
            continue;
        }
        values[off as usize] += match value {
            SeriesValue::Count => 1.0,
            SeriesValue::Engagement(m) => p.engagement.get(m).unwrap_or(0) as f64,
        };
    }
    TimeSeries::new(key, start, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagMatch {
    pub best_lag: i64,
    pub correlation: f64,
    /// Correlation at every lag scanned; `None` where fewer than 3 days
    /// overlap or the overlap has no variance.
    pub per_lag: BTreeMap<i64, Option<f64>>,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx.sqrt() * syy.sqrt()))
    }
}

/// Pairs `a(t - lag)` with `b(t)` over the days both cover.
pub fn lagged_pairs(a: &TimeSeries, b: &TimeSeries, lag: i64) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, y) in b.values.iter().enumerate() {
        let t = b.start + Duration::days(i as i64);
        if let Some(x) = a.at(t - Duration::days(lag)) {
            xs.push(x);
            ys.push(*y);
        }
    }
    (xs, ys)
}

/// Lag in `[-max_lag, max_lag]` maximizing Pearson correlation. A positive
/// lag means `b` trails `a`. Ties go to the smallest |lag|, then the
/// negative one.
pub fn temporal_match(a: &TimeSeries, b: &TimeSeries, max_lag: u32) -> Result<LagMatch, AnalysisError> {
    for s in [a, b] {
        if !s.has_variance() {
            return Err(AnalysisError::ZeroVariance(s.key.clone()));
        }
    }
    let max_lag = i64::from(max_lag);
    let mut per_lag = BTreeMap::new();
    let mut best: Option<(i64, f64)> = None;
    for lag in -max_lag..=max_lag {
        let (xs, ys) = lagged_pairs(a, b, lag);
        let r = if xs.len() >= 3 { pearson(&xs, &ys) } else { None };
        per_lag.insert(lag, r);
        let Some(r) = r else { continue };
        let take = match best {
            None => true,
            Some((bl, br)) => {
                if (r - br).abs() <= 1e-12 {
                    (lag.abs(), lag) < (bl.abs(), bl)
                } else {
                    r > br
                }
            }
        };
        if take {
            best = Some((lag, r));
        }
    }
    let (best_lag, correlation) = best.ok_or(AnalysisError::InsufficientOverlap)?;
    Ok(LagMatch { best_lag, correlation, per_lag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 1, d).unwrap()
    }

    #[test]
    fn identical_series_lag_zero() {
        let a = TimeSeries::new("a", day(1), vec![1.0, 3.0, 2.0, 5.0, 4.0]);
        let m = temporal_match(&a, &a, 0).unwrap();
        assert_eq!(m.best_lag, 0);
        assert!((m.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_series_gives_positive_lag() {
        let vals = vec![0.0, 4.0, 1.0, 7.0, 2.0, 9.0, 3.0, 3.0, 8.0, 1.0, 5.0, 6.0];
        let a = TimeSeries::new("a", day(1), vals.clone());
        // b(t) = a(t - 2)
        let b = TimeSeries::new("b", day(3), vals);
        let m = temporal_match(&a, &b, 4).unwrap();
        assert_eq!(m.best_lag, 2);
        assert!((m.correlation - 1.0).abs() < 1e-12);
        assert_eq!(temporal_match(&b, &a, 4).unwrap().best_lag, -2);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let a = TimeSeries::new("flat", day(1), vec![2.0; 6]);
        let b = TimeSeries::new("b", day(1), vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(temporal_match(&a, &b, 1), Err(AnalysisError::ZeroVariance("flat".into())));
    }

    #[test]
    fn too_little_overlap() {
        let a = TimeSeries::new("a", day(1), vec![1.0, 2.0, 4.0]);
        let b = TimeSeries::new("b", day(10), vec![1.0, 2.0, 4.0]);
        assert_eq!(temporal_match(&a, &b, 2), Err(AnalysisError::InsufficientOverlap));
    }
}
