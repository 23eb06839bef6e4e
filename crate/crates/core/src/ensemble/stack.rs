//! Stacking constituent forecasts with a forest, and the plain mean.
//!
//! A row for `(location, origin, horizon k)` holds the three constituents'
//! `k`-week-ahead incident death forecasts, cumulative deaths at the origin,
//! and incident deaths in the origin week and the week before. Forests for
//! horizon `k` train on the two most recent origins whose `k`-week targets
//! have resolved, `7k` and `7(k+1)` days back.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use super::forest::{fit_forest, ForestHyper, ForestModel};
use super::EnsembleError;
use crate::forecast::{Category, Decisions, ForecastSet, ForecastValue, MethodDescriptor, TargetKind, TargetSpec, TargetType};
use crate::store::{target_week_end, LocationId, Signal, SnapshotView, Store};

pub const FEATURE_COUNT: usize = 6;
pub const STACKED_ENSEMBLE_ID: &str = "EpiBench-RF-ensemble";
pub const MEAN_ENSEMBLE_ID: &str = "mean-ensemble";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub location: LocationId,
    pub origin: NaiveDate,
    pub horizon: u32,
    pub x: [f64; FEATURE_COUNT],
    pub y: Option<f64>,
}

pub fn stacked_descriptor() -> MethodDescriptor {
    MethodDescriptor {
        method_id: STACKED_ENSEMBLE_ID.to_string(),
        category: Category::Aiml,
        decisions: Decisions {
            smoothing_window: "inherited".to_string(),
            model_family: "random-forest-stack".to_string(),
            learning_strategy: "last-two-resolved-origins".to_string(),
            hyperparameter_regime: "fixed".to_string(),
        },
    }
}

pub fn training_origins(current_origin: NaiveDate, horizon: u32) -> [NaiveDate; 2] {
    let k = horizon as i64;
    [current_origin - Duration::days(7 * k), current_origin - Duration::days(7 * (k + 1))]
}

/// Cumulative deaths at the snapshot date and incident deaths in the week
/// ending then and the week before.
pub fn trend_features(view: &SnapshotView, code: &str) -> Option<[f64; 3]> {
    let at = view.as_of();
    let week = |end: NaiveDate, kind| view.week_value(Signal::Deaths, code, end, kind).ok();
    Some([
        week(at, TargetKind::Cumulative)?,
        week(at, TargetKind::Incident)?,
        week(at - Duration::days(7), TargetKind::Incident)?,
    ])
}

/// Complete-case feature rows: a location is kept only when every set has
/// its point forecast and its trend features resolve.
fn feature_rows(sets: &[ForecastSet], view: &SnapshotView, horizon: u32) -> Vec<FeatureRow> {
    let mut locations: Vec<&LocationId> = sets[0]
        .entries()
        .keys()
        .filter(|t| t.horizon_weeks == horizon && t.target_type() == TargetType::INC_DEATH)
        .map(|t| &t.location)
        .collect();
    locations.dedup();
    let mut rows = Vec::new();
    for loc in locations {
        let forecasts: Option<Vec<f64>> =
            sets.iter().map(|s| s.point_for(loc, TargetType::INC_DEATH, horizon)).collect();
        let (Some(f), Some(trend)) = (forecasts, trend_features(view, &loc.code)) else {
            continue;
        };
        let mut x = [0.0; FEATURE_COUNT];
        x[..3].copy_from_slice(&f[..3]);
        x[3..].copy_from_slice(&trend);
        if x.iter().all(|v| v.is_finite()) {
            rows.push(FeatureRow { location: loc.clone(), origin: sets[0].origin, horizon, x, y: None });
        }
    }
    rows
}

fn load_all<F>(constituents: &[&str], origin: NaiveDate, load: &F) -> Result<Vec<ForecastSet>, EnsembleError>
where
    F: Fn(&str, NaiveDate) -> Option<ForecastSet>,
{
    constituents
        .iter()
        .map(|m| {
            load(m, origin).ok_or_else(|| EnsembleError::MissingConstituent { method_id: m.to_string(), origin })
        })
        .collect()
}

/// Rows for the two training origins of `horizon`, pooled across locations.
/// Features come from each row's own origin snapshot; targets are the truth
/// as published by `current_origin`, so nothing later leaks in.
pub fn build_training_set<F>(
    constituents: &[&str],
    current_origin: NaiveDate,
    horizon: u32,
    store: &Store,
    load: F,
) -> Result<Vec<FeatureRow>, EnsembleError>
where
    F: Fn(&str, NaiveDate) -> Option<ForecastSet>,
{
    assert_eq!(constituents.len(), 3, "stacking uses exactly three constituents");
    let truth = store.snapshot(current_origin)?;
    let mut rows = Vec::new();
    for origin in training_origins(current_origin, horizon) {
        let sets = load_all(constituents, origin, &load)?;
        let view = store.snapshot(origin)?;
        let end = target_week_end(origin, horizon);
        for mut row in feature_rows(&sets, &view, horizon) {
            row.y = truth.week_value(Signal::Deaths, &row.location.code, end, TargetKind::Incident).ok();
            if row.y.is_some() {
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Seed of the forest for `horizon`.
fn horizon_seed(seed: u64, horizon: u32) -> u64 {
    seed.wrapping_add((horizon as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One forest per horizon, each trained on its own two-origin window.
pub fn train_forests<F>(
    constituents: &[&str],
    current_origin: NaiveDate,
    horizons: &[u32],
    store: &Store,
    load: F,
    hyper: ForestHyper,
    seed: u64,
) -> Result<BTreeMap<u32, ForestModel>, EnsembleError>
where
    F: Fn(&str, NaiveDate) -> Option<ForecastSet>,
{
    let mut forests = BTreeMap::new();
    for &h in horizons {
        let rows = build_training_set(constituents, current_origin, h, store, &load)?;
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.x.to_vec()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.y.expect("training rows are resolved")).collect();
        forests.insert(h, fit_forest(&x, &y, hyper, horizon_seed(seed, h), h)?);
    }
    Ok(forests)
}

/// Readjusted incident death forecasts at the constituents' common origin.
pub fn stack_forecast(
    current: &[ForecastSet],
    forests: &BTreeMap<u32, ForestModel>,
    view: &SnapshotView,
    horizons: &[u32],
) -> Result<ForecastSet, EnsembleError> {
    let origin = view.as_of();
    if let Some(s) = current.iter().find(|s| s.origin != origin) {
        return Err(EnsembleError::OriginMismatch(origin, s.origin));
    }
    if current.len() != 3 {
        return Err(EnsembleError::Arity { expected: 3, got: current.len() });
    }
    let mut out = ForecastSet::new(STACKED_ENSEMBLE_ID, origin);
    for &h in horizons {
        let forest = forests.get(&h).ok_or(EnsembleError::NoForest(h))?;
        for row in feature_rows(current, view, h) {
            let value = forest.predict(&row.x)?;
            out.insert(TargetSpec::ahead(row.location, TargetType::INC_DEATH, origin, h), ForecastValue::from_point(value))
                .expect("native targets lie after the origin");
        }
    }
    Ok(out)
}

/// Per-target average of the point forecasts of whichever sets cover it.
pub fn mean_ensemble(sets: &[ForecastSet], method_id: &str) -> Result<ForecastSet, EnsembleError> {
    let origin = sets.first().ok_or(EnsembleError::NoConstituents)?.origin;
    if let Some(s) = sets.iter().find(|s| s.origin != origin) {
        return Err(EnsembleError::OriginMismatch(origin, s.origin));
    }
    let mut pooled: BTreeMap<(LocationId, TargetType, u32), Vec<f64>> = BTreeMap::new();
    for set in sets {
        for (target, value) in set.entries() {
            if let Some(p) = value.point() {
                pooled
                    .entry((target.location.clone(), target.target_type(), target.horizon_weeks))
                    .or_default()
                    .push(p);
            }
        }
    }
    let mut out = ForecastSet::new(method_id, origin);
    for ((loc, tt, h), points) in pooled {
        let mean = points.iter().sum::<f64>() / points.len() as f64;
        out.insert(TargetSpec::ahead(loc, tt, origin, h), ForecastValue::from_point(mean))
            .expect("native targets lie after the origin");
    }
    Ok(out)
}
