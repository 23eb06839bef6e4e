//! How much the error moves with the smoothing window and the forecast day.

use std::fmt::Write as _;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rayon::prelude::*;

use super::{Archive, ForecastRequest, Forecaster, HarnessError};
use crate::forecast::{ForecastSet, TargetType};
use crate::metrics::{mae, ScoredPair};
use crate::store::{Store, StoreError};

/// Location-pooled MAE of one forecast set against the latest truth, over
/// all horizons of `target`. `None` when nothing has resolved.
fn pooled_mae(set: &ForecastSet, store: &Store, target: TargetType) -> Result<Option<f64>, HarnessError> {
    let mut pairs = Vec::new();
    for (spec, fv) in set.entries() {
        if spec.target_type() != target || fv.point().is_none() {
            continue;
        }
        match store.ground_truth(spec.signal, &spec.location.code, spec.target_week_end, spec.kind) {
            Ok(truth) => pairs.push(ScoredPair { truth, forecast: fv.clone(), target: spec.clone() }),
            Err(StoreError::Unresolved { .. } | StoreError::MissingSeries { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if pairs.is_empty() {
        return Ok(None);
    }
    Ok(Some(mae(&pairs)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingRow {
    pub origin: NaiveDate,
    pub mae_short: f64,
    pub mae_long: f64,
    /// `mae_short - mae_long`.
    pub difference: f64,
}

impl SmoothingRow {
    /// Absolute difference relative to the larger of the two errors.
    pub fn relative_difference(&self) -> f64 {
        let scale = self.mae_short.max(self.mae_long);
        if scale == 0.0 {
            0.0
        } else {
            self.difference.abs() / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport {
    pub short_id: String,
    pub long_id: String,
    pub rows: Vec<SmoothingRow>,
    pub mean_abs_difference: f64,
}

impl SmoothingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("origin,mae_short,mae_long,difference,relative_difference\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.origin, r.mae_short, r.mae_long, r.difference, r.relative_difference());
        }
        out
    }
}

/// Paired per-origin MAE of two archived variants that differ only in the
/// smoothing window.
pub fn sensitivity_smoothing(
    archive: &Archive,
    store: &Store,
    short_id: &str,
    long_id: &str,
    origins: &[NaiveDate],
    target: TargetType,
) -> Result<SmoothingReport, HarnessError> {
    let load = |id: &str, origin| archive.load(id, origin)?.ok_or_else(|| HarnessError::MissingMethod(format!("{id} at {origin}")));
    let mut rows = Vec::new();
    for &origin in origins {
        let short = pooled_mae(&load(short_id, origin)?, store, target)?;
        let long = pooled_mae(&load(long_id, origin)?, store, target)?;
        if let (Some(mae_short), Some(mae_long)) = (short, long) {
            rows.push(SmoothingRow { origin, mae_short, mae_long, difference: mae_short - mae_long });
        }
    }
    if rows.is_empty() {
        return Err(HarnessError::NoResolvableTargets);
    }
    let mean_abs_difference = rows.iter().map(|r| r.difference.abs()).sum::<f64>() / rows.len() as f64;
    Ok(SmoothingReport { short_id: short_id.to_string(), long_id: long_id.to_string(), rows, mean_abs_difference })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeekdaySummary {
    pub weekday: Weekday,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl WeekdaySummary {
    fn from_values(weekday: Weekday, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        if values.is_empty() {
            return Self { weekday, n: 0, min: f64::NAN, q1: f64::NAN, median: f64::NAN, q3: f64::NAN, max: f64::NAN };
        }
        Self {
            weekday,
            n: values.len(),
            min: values[0],
            q1: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q3: quantile(&values, 0.75),
            max: values[values.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayOfWeekReport {
    pub method_id: String,
    pub per_origin: Vec<(NaiveDate, f64)>,
    /// Monday through Sunday; always seven entries.
    pub groups: Vec<WeekdaySummary>,
    /// Largest minus smallest weekday median.
    pub median_spread: f64,
}

impl DayOfWeekReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("weekday,n,min,q1,median,q3,max\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", g.weekday, g.n, g.min, g.q1, g.median, g.q3, g.max);
        }
        out
    }
}

/// Issues forecasts at every day of `start..=end` and summarizes the pooled
/// MAE by weekday of the origin. Targets stay 7-day blocks ending `7k` days
/// after each origin.
pub fn sensitivity_day_of_week(
    store: &Store,
    forecaster: &dyn Forecaster,
    start: NaiveDate,
    end: NaiveDate,
    request: &ForecastRequest,
) -> Result<DayOfWeekReport, HarnessError> {
    let days = (end - start).num_days() + 1;
    if days < 7 {
        return Err(HarnessError::PeriodTooShort { days });
    }
    let target = *request.targets.first().unwrap_or(&TargetType::INC_DEATH);
    let origins: Vec<NaiveDate> = (0..days).map(|i| start + Duration::days(i)).collect();
    let scored: Vec<Option<(NaiveDate, f64)>> = origins
        .par_iter()
        .map(|&origin| {
            let set = forecaster.forecast(&store.snapshot(origin)?, request)?;
            Ok(pooled_mae(&set, store, target)?.map(|m| (origin, m)))
        })
        .collect::<Result<_, HarnessError>>()?;
    let per_origin: Vec<(NaiveDate, f64)> = scored.into_iter().flatten().collect();
    if per_origin.is_empty() {
        return Err(HarnessError::NoResolvableTargets);
    }
    let groups: Vec<WeekdaySummary> = [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun]
        .into_iter()
        .map(|wd| {
            let values = per_origin.iter().filter(|(o, _)| o.weekday() == wd).map(|(_, v)| *v).collect();
            WeekdaySummary::from_values(wd, values)
        })
        .collect();
    let medians = groups.iter().filter(|g| g.n > 0).map(|g| g.median);
    let (lo, hi) = medians.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
    Ok(DayOfWeekReport {
        method_id: forecaster.descriptor().method_id.clone(),
        per_origin,
        groups,
        median_spread: hi - lo,
    })
}
