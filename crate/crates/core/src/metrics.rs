//! Scoring rules for point, binned and interval forecasts.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::{ForecastValue, TargetSpec, BIN_MASS_TOLERANCE};
use crate::numeric::fmt_f64;

/// Floor applied to each `ln P(E)` term of the log score.
pub const LOG_SCORE_FLOOR: f64 = -10.0;

/// Nominal level used when coverage is requested without one.
pub const DEFAULT_COVERAGE_LEVEL: f64 = 0.95;

pub const REPORT_HEADER: &str = "method_id,metric,horizon,origin,location,value,n";

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no scored pairs")]
    Empty,
    #[error("pair {0} has no point forecast")]
    MissingPoint(usize),
    #[error("pair {0} has neither bins nor quantiles")]
    MissingBins(usize),
    #[error("pair {0}: truth {1} falls outside every bin")]
    TruthOutsideBins(usize, f64),
    #[error("pair {0}: truth {1} falls in more than one bin")]
    OverlappingBins(usize, f64),
    #[error("pair {0}: bin probabilities sum to {1}")]
    BinMass(usize, f64),
    #[error("pair {0}: quantile levels for a {1} interval are missing")]
    MissingQuantiles(usize, f64),
}

/// A forecast paired with its resolved truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub truth: f64,
    pub forecast: ForecastValue,
    pub target: TargetSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Smape,
    LogScore,
    Coverage,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mae, Metric::Smape, Metric::LogScore, Metric::Coverage];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Smape => "smape",
            Metric::LogScore => "log_score",
            Metric::Coverage => "coverage",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::LogScore | Metric::Coverage)
    }

    /// Whether a forecast carries the form this metric needs.
    pub fn applicable(self, fv: &ForecastValue) -> bool {
        match self {
            Metric::Mae | Metric::Smape => fv.point().is_some(),
            Metric::LogScore => fv.bins().is_some() || fv.quantiles().is_some(),
            Metric::Coverage => fv.interval(DEFAULT_COVERAGE_LEVEL).is_ok(),
        }
    }

    pub fn score(self, pairs: &[ScoredPair]) -> Result<f64, MetricError> {
        match self {
            Metric::Mae => mae(pairs),
            Metric::Smape => smape(pairs),
            Metric::LogScore => log_score(pairs),
            Metric::Coverage => coverage(pairs, DEFAULT_COVERAGE_LEVEL),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

fn points(pairs: &[ScoredPair]) -> Result<impl Iterator<Item = (f64, f64)> + '_, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = pairs.iter().position(|p| p.forecast.point().is_none()) {
        return Err(MetricError::MissingPoint(i));
    }
    Ok(pairs.iter().map(|p| (p.truth, p.forecast.point().unwrap())))
}

/// Mean absolute error.
pub fn mae(pairs: &[ScoredPair]) -> Result<f64, MetricError> {
    let n = pairs.len() as f64;
    Ok(points(pairs)?.map(|(y, f)| (y - f).abs()).sum::<f64>() / n)
}

/// Symmetric MAPE, `|y - f| / (0.5 |y + f|)` averaged over pairs. A pair with
/// `y = f = 0` contributes zero.
pub fn smape(pairs: &[ScoredPair]) -> Result<f64, MetricError> {
    let n = pairs.len() as f64;
    let total: f64 = points(pairs)?
        .map(|(y, f)| {
            let err = (y - f).abs();
            if err == 0.0 {
                0.0
            } else {
                err / (0.5 * (y + f).abs())
            }
        })
        .sum();
    Ok(total / n)
}

/// Mean over pairs of `max(ln P(E), -10)`, where `E` is the bin holding the
/// truth. Quantile-only forecasts are binned with
/// [`crate::forecast::synthesize_bins`].
pub fn log_score(pairs: &[ScoredPair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let bins = p.forecast.bins_or_synthesized().ok_or(MetricError::MissingBins(i))?;
        let mass: f64 = bins.iter().map(|b| b.probability).sum();
        if (mass - 1.0).abs() > BIN_MASS_TOLERANCE {
            return Err(MetricError::BinMass(i, mass));
        }
        let mut hits = bins.iter().filter(|b| b.contains(p.truth));
        let bin = hits.next().ok_or(MetricError::TruthOutsideBins(i, p.truth))?;
        if hits.next().is_some() {
            return Err(MetricError::OverlappingBins(i, p.truth));
        }
        // ln 0 = -inf, floored like any other very small probability
        total += bin.probability.ln().max(LOG_SCORE_FLOOR);
    }
    Ok(total / pairs.len() as f64)
}

/// Fraction of truths inside the central `nominal` interval.
pub fn coverage(pairs: &[ScoredPair], nominal: f64) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut inside = 0usize;
    for (i, p) in pairs.iter().enumerate() {
        let (lo, hi) = p
            .forecast
            .interval(nominal)
            .map_err(|_| MetricError::MissingQuantiles(i, nominal))?;
        if lo <= p.truth && p.truth <= hi {
            inside += 1;
        }
    }
    Ok(inside as f64 / pairs.len() as f64)
}

/// One metric value for a group of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method_id: String,
    pub metric: Metric,
    pub horizon: u32,
    pub origin: NaiveDate,
    /// `None` for aggregates over locations.
    pub location: Option<String>,
    pub value: f64,
    pub n: usize,
}

pub fn write_reports(reports: &[MetricReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method_id,
            r.metric,
            r.horizon,
            r.origin,
            r.location.as_deref().unwrap_or(""),
            fmt_f64(r.value),
            r.n
        ));
    }
    out
}

pub fn parse_reports(text: &str) -> Result<Vec<MetricReport>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(format!("expected header `{REPORT_HEADER}`"));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || format!("line {}: malformed report row `{line}`", i + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(MetricReport {
                method_id: f[0].to_string(),
                metric: f[1].parse().map_err(|_| bad())?,
                horizon: f[2].parse().map_err(|_| bad())?,
                origin: f[3].parse().map_err(|_| bad())?,
                location: (!f[4].is_empty()).then(|| f[4].to_string()),
                value: f[5].parse().map_err(|_| bad())?,
                n: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
