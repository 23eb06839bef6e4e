use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::numeric::bounded_mean;

/// A contiguous run of daily values starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedSeries {
    start: NaiveDate,
    values: Vec<f64>,
}

impl DatedSeries {
    pub fn new(start: NaiveDate, values: Vec<f64>) -> Self {
        Self { start, values }
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    /// Last covered date. For an empty series this is the day before `start`.
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.values.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.values.len()).then_some(offset as usize)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.values[i])
    }

    pub fn covers(&self, first: NaiveDate, last: NaiveDate) -> bool {
        !self.is_empty() && self.start <= first && last <= self.end()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.date_at(i), v))
    }

    /// Prefix of the series ending at `last` (inclusive).
    pub fn truncated(&self, last: NaiveDate) -> DatedSeries {
        let keep = ((last - self.start).num_days() + 1).clamp(0, self.values.len() as i64);
        DatedSeries::new(self.start, self.values[..keep as usize].to_vec())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DatedSeries {
        DatedSeries::new(self.start, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Daily increments of a cumulative series together with the dates whose
/// increment came out negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Incident {
    pub series: DatedSeries,
    pub negative_days: Vec<NaiveDate>,
}

impl Incident {
    pub fn has_negative(&self) -> bool {
        !self.negative_days.is_empty()
    }
}

/// First difference of a cumulative series; the first day is taken against
/// zero. Negative increments are kept and reported.
pub fn incident(cumulative: &DatedSeries) -> Incident {
    let mut prev = 0.0;
    let mut negative_days = Vec::new();
    let values = cumulative
        .iter()
        .map(|(date, v)| {
            let d = v - prev;
            prev = v;
            if d < 0.0 {
                negative_days.push(date);
            }
            d
        })
        .collect();
    Incident {
        series: DatedSeries::new(cumulative.start(), values),
        negative_days,
    }
}

/// Running sum of daily increments, the inverse of [`incident`].
pub fn cumulate(daily: &DatedSeries) -> DatedSeries {
    let mut acc = 0.0;
    DatedSeries::new(
        daily.start(),
        daily
            .values()
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect(),
    )
}

/// Trailing moving average. Days near the start average over whatever
/// history exists.
pub fn smooth(series: &DatedSeries, window_days: usize) -> Result<DatedSeries, StoreError> {
    if window_days == 0 {
        return Err(StoreError::InvalidWindow);
    }
    if series.is_empty() {
        return Err(StoreError::EmptySeries);
    }
    let v = series.values();
    let out = (0..v.len())
        .map(|t| bounded_mean(&v[(t + 1).saturating_sub(window_days)..=t]))
        .collect();
    Ok(DatedSeries::new(series.start(), out))
}
