//! Forecast and target data model.

mod submission;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use submission::{parse_submission, write_submission, ParsedSubmission, SUBMISSION_HEADER};

use crate::store::{LocationId, Signal};

/// Tolerance on the total probability of a binned forecast.
pub const BIN_MASS_TOLERANCE: f64 = 1e-9;

const LEVEL_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("missing header `{}`", SUBMISSION_HEADER)]
    MissingHeader,
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: quantile level {level} is outside (0, 1)")]
    QuantileLevel { line: u64, level: String },
    #[error("line {line}: point value `{value}` is not numeric")]
    NonNumericPoint { line: u64, value: String },
    #[error("line {line}: target end {end} is not aligned with {horizon} wk ahead of {origin}")]
    Misaligned {
        line: u64,
        origin: NaiveDate,
        horizon: u32,
        end: NaiveDate,
    },
    #[error("target week ending {end} does not lie after origin {origin}")]
    Hindcast { origin: NaiveDate, end: NaiveDate },
    #[error("invalid forecast value: {0}")]
    InvalidValue(String),
    #[error("quantile levels for a {nominal} interval are missing")]
    MissingQuantiles { nominal: f64 },
    #[error("submission has no rows and no origin was given")]
    UnknownOrigin,
}

/// Weekly target type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Incident,
    Cumulative,
}

impl TargetKind {
    pub fn word(self) -> &'static str {
        match self {
            TargetKind::Incident => "inc",
            TargetKind::Cumulative => "cum",
        }
    }
}

/// A `(signal, kind)` pair such as "inc death", used in plans and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TargetType {
    pub signal: Signal,
    pub kind: TargetKind,
}

impl TargetType {
    pub const INC_DEATH: TargetType = TargetType {
        signal: Signal::Deaths,
        kind: TargetKind::Incident,
    };
}

impl fmt::Display for TargetType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.word(), self.signal.target_word())
    }
}

impl std::str::FromStr for TargetType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let kind = match parts.next() {
            Some("inc") => TargetKind::Incident,
            Some("cum") => TargetKind::Cumulative,
            _ => return Err(format!("unknown target type `{s}`")),
        };
        let signal = match parts.next() {
            Some("case") => Signal::Cases,
            Some("death") => Signal::Deaths,
            _ => return Err(format!("unknown target type `{s}`")),
        };
        if parts.next().is_some() {
            return Err(format!("unknown target type `{s}`"));
        }
        Ok(TargetType { signal, kind })
    }
}

/// One forecast target: a weekly value for a location.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TargetSpec {
    pub location: LocationId,
    pub signal: Signal,
    pub kind: TargetKind,
    pub horizon_weeks: u32,
    pub target_week_end: NaiveDate,
}

impl TargetSpec {
    /// Target under the native week convention: the week ends `7 * horizon`
    /// days after the origin.
    pub fn ahead(
        location: LocationId,
        target: TargetType,
        origin: NaiveDate,
        horizon_weeks: u32,
    ) -> Self {
        Self {
            location,
            signal: target.signal,
            kind: target.kind,
            horizon_weeks,
            target_week_end: crate::store::target_week_end(origin, horizon_weeks),
        }
    }

    pub fn target_type(&self) -> TargetType {
        TargetType {
            signal: self.signal,
            kind: self.kind,
        }
    }
}

/// End date of the `horizon`-week-ahead epidemiological week (Sunday to
/// Saturday) used by hub submissions: forecasts dated Sunday or Monday
/// target the current week's Saturday first, later weekdays the next one.
pub fn hub_week_end(origin: NaiveDate, horizon_weeks: u32) -> NaiveDate {
    let weekday = origin.weekday().num_days_from_sunday() as i64;
    let first = if weekday <= 1 { 6 - weekday } else { 13 - weekday };
    origin + Duration::days(first + 7 * (horizon_weeks as i64 - 1))
}

/// Accepts the native `origin + 7k` convention or the hub epiweek one.
pub fn is_aligned(origin: NaiveDate, horizon_weeks: u32, end: NaiveDate) -> bool {
    end == crate::store::target_week_end(origin, horizon_weeks)
        || end == hub_week_end(origin, horizon_weeks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

/// Probability mass on the half-open interval `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub probability: f64,
}

impl Bin {
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y < self.upper
    }
}

/// A forecast for one target in point, quantile and/or binned form.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForecastValue {
    point: Option<f64>,
    quantiles: Option<Vec<Quantile>>,
    bins: Option<Vec<Bin>>,
}

impl ForecastValue {
    /// Validates and normalises a forecast: quantiles are sorted by level.
    pub fn new(
        point: Option<f64>,
        quantiles: Option<Vec<Quantile>>,
        bins: Option<Vec<Bin>>,
    ) -> Result<Self, ForecastError> {
        let invalid = |msg: String| Err(ForecastError::InvalidValue(msg));
        if point.is_none() && quantiles.is_none() && bins.is_none() {
            return invalid("no point, quantile or bin form present".into());
        }
        if let Some(p) = point {
            if !p.is_finite() {
                return invalid(format!("point {p} is not finite"));
            }
        }
        let quantiles = match quantiles {
            Some(mut qs) => {
                if qs.is_empty() {
                    return invalid("empty quantile list".into());
                }
                qs.sort_by(|a, b| a.level.total_cmp(&b.level));
                for q in &qs {
                    if !(q.level > 0.0 && q.level < 1.0) || !q.value.is_finite() {
                        return invalid(format!("bad quantile ({}, {})", q.level, q.value));
                    }
                }
                for w in qs.windows(2) {
                    if w[0].level == w[1].level {
                        return invalid(format!("duplicate quantile level {}", w[0].level));
                    }
                    if w[1].value < w[0].value {
                        return invalid(format!(
                            "quantile values decrease between levels {} and {}",
                            w[0].level, w[1].level
                        ));
                    }
                }
                Some(qs)
            }
            None => None,
        };
        if let Some(bins) = &bins {
            validate_bins(bins).map_err(ForecastError::InvalidValue)?;
        }
        Ok(Self {
            point,
            quantiles,
            bins,
        })
    }

    pub fn from_point(value: f64) -> Self {
        Self::new(Some(value), None, None).expect("finite point forecast")
    }

    pub fn point(&self) -> Option<f64> {
        self.point
    }

    pub fn quantiles(&self) -> Option<&[Quantile]> {
        self.quantiles.as_deref()
    }

    pub fn bins(&self) -> Option<&[Bin]> {
        self.bins.as_deref()
    }

    fn level_value(&self, level: f64) -> Option<f64> {
        self.quantiles()?
            .iter()
            .find(|q| (q.level - level).abs() < LEVEL_MATCH_TOLERANCE)
            .map(|q| q.value)
    }

    /// Central interval at the `nominal` level, read from the quantiles
    /// `(1 - nominal) / 2` and `1 - (1 - nominal) / 2`.
    pub fn interval(&self, nominal: f64) -> Result<(f64, f64), ForecastError> {
        interval_from_quantiles(self, nominal)
    }

    /// Explicit bins, or bins synthesized from the quantiles.
    pub fn bins_or_synthesized(&self) -> Option<Vec<Bin>> {
        match (&self.bins, &self.quantiles) {
            (Some(b), _) => Some(b.clone()),
            (None, Some(q)) => Some(synthesize_bins(q)),
            _ => None,
        }
    }
}

fn validate_bins(bins: &[Bin]) -> Result<(), String> {
    if bins.is_empty() {
        return Err("empty bin list".into());
    }
    for b in bins {
        if !(b.lower < b.upper) || b.probability.is_nan() || b.probability < 0.0 {
            return Err(format!("bad bin [{}, {}) p={}", b.lower, b.upper, b.probability));
        }
    }
    for w in bins.windows(2) {
        if w[1].lower < w[0].upper {
            return Err("bins must be sorted and non-overlapping".into());
        }
    }
    let mass: f64 = bins.iter().map(|b| b.probability).sum();
    if (mass - 1.0).abs() > BIN_MASS_TOLERANCE {
        return Err(format!("bin probabilities sum to {mass}"));
    }
    Ok(())
}

pub fn interval_from_quantiles(fv: &ForecastValue, nominal: f64) -> Result<(f64, f64), ForecastError> {
    let missing = ForecastError::MissingQuantiles { nominal };
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(missing);
    }
    let tail = (1.0 - nominal) / 2.0;
    let lower = fv.level_value(tail).ok_or(ForecastError::MissingQuantiles { nominal })?;
    let upper = fv.level_value(1.0 - tail).ok_or(missing)?;
    Ok((lower, upper))
}

/// Piecewise-uniform binning of a quantile forecast.
///
/// Consecutive quantiles bound bins carrying the difference of their levels.
/// The mass below the first and above the last quantile is spread over one
/// neighbouring inter-quantile width (one unit when that width is zero).
/// Two zero-probability bins extend the support to the whole real line, so
/// every finite truth falls in exactly one bin.
pub fn synthesize_bins(quantiles: &[Quantile]) -> Vec<Bin> {
    // Tied values keep their lowest level: the mass between tied levels sits
    // on that value, which belongs to the bin starting there.
    let mut knots: Vec<Quantile> = Vec::with_capacity(quantiles.len());
    for q in quantiles {
        if knots.last().is_none_or(|last| last.value != q.value) {
            knots.push(*q);
        }
    }
    let first = knots[0];
    let last = *knots.last().unwrap();
    let (lower_width, upper_width) = match knots.len() {
        1 => (1.0, 1.0),
        n => (knots[1].value - first.value, last.value - knots[n - 2].value),
    };

    let lower_edge = first.value - lower_width;
    let upper_edge = last.value + upper_width;
    let mut bins = Vec::with_capacity(knots.len() + 3);
    bins.push(Bin {
        lower: f64::NEG_INFINITY,
        upper: lower_edge,
        probability: 0.0,
    });
    bins.push(Bin {
        lower: lower_edge,
        upper: first.value,
        probability: first.level,
    });
    for pair in knots.windows(2) {
        bins.push(Bin {
            lower: pair[0].value,
            upper: pair[1].value,
            probability: pair[1].level - pair[0].level,
        });
    }
    bins.push(Bin {
        lower: last.value,
        upper: upper_edge,
        probability: 1.0 - last.level,
    });
    bins.push(Bin {
        lower: upper_edge,
        upper: f64::INFINITY,
        probability: 0.0,
    });
    bins
}

/// Declared category of a forecasting method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Aiml,
    HumanExpert,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Aiml => "aiml",
            Category::HumanExpert => "human_expert",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Declared pipeline choices of a method, as free-form tags.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Decisions {
    pub smoothing_window: String,
    pub model_family: String,
    pub learning_strategy: String,
    pub hyperparameter_regime: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    pub method_id: String,
    pub category: Category,
    #[serde(default)]
    pub decisions: Decisions,
}

impl MethodDescriptor {
    /// Descriptor for an imported submission of unknown provenance.
    pub fn imported(method_id: impl Into<String>) -> Self {
        Self {
            method_id: method_id.into(),
            category: Category::HumanExpert,
            decisions: Decisions::default(),
        }
    }
}

/// One method's forecasts issued at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub method_id: String,
    pub origin: NaiveDate,
    entries: BTreeMap<TargetSpec, ForecastValue>,
}

impl ForecastSet {
    pub fn new(method_id: impl Into<String>, origin: NaiveDate) -> Self {
        Self {
            method_id: method_id.into(),
            origin,
            entries: BTreeMap::new(),
        }
    }

    /// Adds an entry; the target week must end after the origin and follow
    /// one of the accepted week conventions. Replaces an existing entry for
    /// the same target.
    pub fn insert(&mut self, target: TargetSpec, value: ForecastValue) -> Result<(), ForecastError> {
        if target.target_week_end <= self.origin {
            return Err(ForecastError::Hindcast {
                origin: self.origin,
                end: target.target_week_end,
            });
        }
        if !is_aligned(self.origin, target.horizon_weeks, target.target_week_end) {
            return Err(ForecastError::Misaligned {
                line: 0,
                origin: self.origin,
                horizon: target.horizon_weeks,
                end: target.target_week_end,
            });
        }
        self.entries.insert(target, value);
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<TargetSpec, ForecastValue> {
        &self.entries
    }

    pub fn get(&self, target: &TargetSpec) -> Option<&ForecastValue> {
        self.entries.get(target)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Point forecast for a target under either week convention.
    pub fn point_for(&self, location: &LocationId, target: TargetType, horizon: u32) -> Option<f64> {
        let mut spec = TargetSpec::ahead(location.clone(), target, self.origin, horizon);
        if let Some(v) = self.entries.get(&spec) {
            return v.point();
        }
        spec.target_week_end = hub_week_end(self.origin, horizon);
        self.entries.get(&spec).and_then(ForecastValue::point)
    }
}
