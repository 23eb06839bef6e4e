//! Versioned truth store.
//!
//! Every ingested file is a complete version of a cumulative series as it was
//! published on its version date. A [`SnapshotView`] resolves, per series,
//! the newest version published on or before its `as_of` date and is the only
//! handle forecasters ever receive. Ground truth for scoring is read from the
//! latest version.

mod persist;
mod series;
mod truth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use series::{cumulate, incident, smooth, DatedSeries, Incident};
pub use truth::{
    parse_truth_file_name, truth_file_name, write_truth_file, IngestFormat, TRUTH_HEADER,
};

use crate::forecast::TargetKind;
use crate::numeric::fmt_f64;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: negative value for location {location}")]
    NegativeValue { line: u64, location: String },
    #[error("version {date} of {signal} was already ingested")]
    DuplicateVersion { signal: Signal, date: NaiveDate },
    #[error("location {location} does not cover a contiguous date range")]
    NonContiguous { location: String },
    #[error("version {version} of {signal}/{location} would drop dates covered by version {other}")]
    RangeShrink {
        signal: Signal,
        location: String,
        version: NaiveDate,
        other: NaiveDate,
    },
    #[error("no data version published on or before {as_of}")]
    NoVersion { as_of: NaiveDate },
    #[error("no {signal} series for location {location} as of {as_of}")]
    MissingSeries {
        signal: Signal,
        location: String,
        as_of: NaiveDate,
    },
    #[error("week ending {week_end} is not fully covered for {signal}/{location}")]
    Unresolved {
        signal: Signal,
        location: String,
        week_end: NaiveDate,
    },
    #[error("smoothing window must be at least one day")]
    InvalidWindow,
    #[error("cannot smooth an empty series")]
    EmptySeries,
    #[error("store layout error at {path}: {reason}")]
    Layout { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Epidemic signal tracked by the store. Stored series are always cumulative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Cases,
    Deaths,
}

impl Signal {
    pub const ALL: [Signal; 2] = [Signal::Cases, Signal::Deaths];

    /// Name used for truth files and store directories.
    pub fn truth_name(self) -> &'static str {
        match self {
            Signal::Cases => "cumulative_cases",
            Signal::Deaths => "cumulative_deaths",
        }
    }

    pub fn from_truth_name(name: &str) -> Option<Signal> {
        match name {
            "cumulative_cases" | "cases" => Some(Signal::Cases),
            "cumulative_deaths" | "deaths" => Some(Signal::Deaths),
            _ => None,
        }
    }

    /// Word used in submission targets (`case` / `death`).
    pub fn target_word(self) -> &'static str {
        match self {
            Signal::Cases => "case",
            Signal::Deaths => "death",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.truth_name())
    }
}

/// A FIPS-style location code with a display name. Identity is the code.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocationId {
    pub code: String,
    pub name: String,
}

impl LocationId {
    pub fn new(code: impl Into<String>) -> Self {
        let code = code.into();
        Self {
            name: code.clone(),
            code,
        }
    }

    pub fn named(code: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            name: name.into(),
        }
    }
}

impl PartialEq for LocationId {
    fn eq(&self, other: &Self) -> bool {
        self.code == other.code
    }
}

impl Eq for LocationId {}

impl PartialOrd for LocationId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LocationId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.code.cmp(&other.code)
    }
}

impl Hash for LocationId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.code.hash(state);
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

/// All published versions of one cumulative series.
#[derive(Debug, Clone)]
pub struct VersionedSeries {
    pub location: LocationId,
    pub signal: Signal,
    versions: BTreeMap<NaiveDate, Arc<DatedSeries>>,
}

impl VersionedSeries {
    fn new(location: LocationId, signal: Signal) -> Self {
        Self {
            location,
            signal,
            versions: BTreeMap::new(),
        }
    }

    pub fn versions(&self) -> impl Iterator<Item = (NaiveDate, &DatedSeries)> {
        self.versions.iter().map(|(d, s)| (*d, s.as_ref()))
    }

    /// Newest version published on or before `as_of`.
    pub fn as_of(&self, as_of: NaiveDate) -> Option<&Arc<DatedSeries>> {
        self.versions.range(..=as_of).next_back().map(|(_, s)| s)
    }

    pub fn latest(&self) -> Option<&DatedSeries> {
        self.versions.values().next_back().map(|s| s.as_ref())
    }

    /// Checks that inserting `series` at `version` keeps every later version's
    /// range a superset of every earlier one.
    fn check_range(&self, version: NaiveDate, series: &DatedSeries) -> Result<(), StoreError> {
        let shrink = |other: NaiveDate| StoreError::RangeShrink {
            signal: self.signal,
            location: self.location.code.clone(),
            version,
            other,
        };
        if let Some((&prev_date, prev)) = self.versions.range(..version).next_back() {
            if !prev.is_empty() && !series.covers(prev.start(), prev.end()) {
                return Err(shrink(prev_date));
            }
        }
        if let Some((&next_date, next)) = self.versions.range(version..).next() {
            if !next.covers(series.start(), series.end()) {
                return Err(shrink(next_date));
            }
        }
        Ok(())
    }
}

/// Outcome of one ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub series_updated: usize,
    /// Locations and dates where the cumulative series decreased.
    pub non_monotone: Vec<(LocationId, NaiveDate)>,
}

/// In-memory versioned store. Mutation is exclusive (`&mut self`); snapshots
/// are independent immutable values.
#[derive(Debug, Clone, Default)]
pub struct Store {
    series: BTreeMap<(Signal, String), VersionedSeries>,
    names: BTreeMap<String, String>,
    ingested: BTreeSet<(Signal, NaiveDate)>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one published version. The file is validated completely before
    /// the store is touched.
    pub fn ingest_version(
        &mut self,
        raw: &[u8],
        version_date: NaiveDate,
        format: IngestFormat,
    ) -> Result<IngestReport, StoreError> {
        let signal = format.signal();
        if self.ingested.contains(&(signal, version_date)) {
            return Err(StoreError::DuplicateVersion {
                signal,
                date: version_date,
            });
        }
        let parsed = truth::parse_truth(raw, version_date, format)?;

        for (code, loc) in &parsed {
            if let Some(existing) = self.series.get(&(signal, code.clone())) {
                existing.check_range(version_date, &loc.series)?;
            }
        }

        let mut non_monotone = Vec::new();
        for (code, loc) in parsed {
            if let Some(name) = loc.name {
                self.names.insert(code.clone(), name);
            }
            let location = self.location(&code);
            for w in 1..loc.series.len() {
                if loc.series.values()[w] < loc.series.values()[w - 1] {
                    non_monotone.push((location.clone(), loc.series.date_at(w)));
                }
            }
            self.series
                .entry((signal, code))
                .or_insert_with(|| VersionedSeries::new(location, signal))
                .versions
                .insert(version_date, Arc::new(loc.series));
        }
        let series_updated = self
            .series
            .values()
            .filter(|s| s.signal == signal && s.versions.contains_key(&version_date))
            .count();
        self.ingested.insert((signal, version_date));
        if !non_monotone.is_empty() {
            log::warn!(
                "{signal} version {version_date}: {} non-monotone cumulative values",
                non_monotone.len()
            );
        }
        Ok(IngestReport {
            series_updated,
            non_monotone,
        })
    }

    pub fn location(&self, code: &str) -> LocationId {
        match self.names.get(code) {
            Some(name) => LocationId::named(code, name.clone()),
            None => LocationId::new(code),
        }
    }

    pub fn locations(&self, signal: Signal) -> Vec<LocationId> {
        self.series
            .values()
            .filter(|s| s.signal == signal)
            .map(|s| s.location.clone())
            .collect()
    }

    pub fn series(&self, signal: Signal, code: &str) -> Option<&VersionedSeries> {
        self.series.get(&(signal, code.to_string()))
    }

    pub fn version_dates(&self, signal: Signal) -> Vec<NaiveDate> {
        self.ingested
            .iter()
            .filter(|(s, _)| *s == signal)
            .map(|(_, d)| *d)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ingested.is_empty()
    }

    /// Resolves every series to its newest version published on or before
    /// `as_of`. Series with no such version are absent from the view.
    pub fn snapshot(&self, as_of: NaiveDate) -> Result<SnapshotView, StoreError> {
        let series: BTreeMap<_, _> = self
            .series
            .iter()
            .filter_map(|(key, vs)| vs.as_of(as_of).map(|s| (key.clone(), Arc::clone(s))))
            .collect();
        if series.is_empty() {
            return Err(StoreError::NoVersion { as_of });
        }
        let names = series
            .keys()
            .map(|(_, code)| (code.clone(), self.location(code)))
            .collect();
        Ok(SnapshotView {
            as_of,
            series,
            names,
        })
    }

    /// Copy of the store without any version published after `as_of`.
    pub fn truncated(&self, as_of: NaiveDate) -> Store {
        let series = self
            .series
            .iter()
            .filter_map(|(key, vs)| {
                let versions: BTreeMap<_, _> = vs
                    .versions
                    .range(..=as_of)
                    .map(|(d, s)| (*d, Arc::clone(s)))
                    .collect();
                (!versions.is_empty()).then(|| {
                    (
                        key.clone(),
                        VersionedSeries {
                            location: vs.location.clone(),
                            signal: vs.signal,
                            versions,
                        },
                    )
                })
            })
            .collect();
        Store {
            series,
            names: self.names.clone(),
            ingested: self.ingested.iter().filter(|(_, d)| *d <= as_of).copied().collect(),
        }
    }

    /// Truth for the week ending `week_end`, read from the latest version.
    pub fn ground_truth(
        &self,
        signal: Signal,
        code: &str,
        week_end: NaiveDate,
        kind: TargetKind,
    ) -> Result<f64, StoreError> {
        let unresolved = || StoreError::Unresolved {
            signal,
            location: code.to_string(),
            week_end,
        };
        let latest = self.series(signal, code).and_then(|s| s.latest()).ok_or_else(unresolved)?;
        week_value(latest, week_end, kind).ok_or_else(unresolved)
    }
}

/// First day of the 7-day block ending on `week_end`.
pub fn week_start(week_end: NaiveDate) -> NaiveDate {
    week_end - Duration::days(6)
}

/// End of the target week `horizon_weeks` ahead of `origin`.
pub fn target_week_end(origin: NaiveDate, horizon_weeks: u32) -> NaiveDate {
    origin + Duration::days(7 * horizon_weeks as i64)
}

/// Weekly value of a cumulative series: the sum of daily increments over the
/// 7-day block for incident targets, the value on `week_end` for cumulative
/// ones. `None` when the block is not fully covered.
pub fn week_value(cumulative: &DatedSeries, week_end: NaiveDate, kind: TargetKind) -> Option<f64> {
    let first = week_start(week_end);
    if !cumulative.covers(first, week_end) {
        return None;
    }
    match kind {
        TargetKind::Cumulative => cumulative.get(week_end),
        TargetKind::Incident => {
            let daily = incident(cumulative).series;
            let i = daily.index_of(first)?;
            Some(daily.values()[i..i + 7].iter().sum())
        }
    }
}

/// Immutable per-series view of the store as it was on `as_of`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotView {
    as_of: NaiveDate,
    series: BTreeMap<(Signal, String), Arc<DatedSeries>>,
    names: BTreeMap<String, LocationId>,
}

impl SnapshotView {
    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    pub fn series(&self, signal: Signal, code: &str) -> Result<&DatedSeries, StoreError> {
        self.series
            .get(&(signal, code.to_string()))
            .map(|s| s.as_ref())
            .ok_or_else(|| StoreError::MissingSeries {
                signal,
                location: code.to_string(),
                as_of: self.as_of,
            })
    }

    pub fn locations(&self, signal: Signal) -> Vec<LocationId> {
        self.series
            .keys()
            .filter(|(s, _)| *s == signal)
            .map(|(_, code)| self.names[code].clone())
            .collect()
    }

    /// Truth for a week as known at `as_of`.
    pub fn week_value(
        &self,
        signal: Signal,
        code: &str,
        week_end: NaiveDate,
        kind: TargetKind,
    ) -> Result<f64, StoreError> {
        week_value(self.series(signal, code)?, week_end, kind).ok_or_else(|| {
            StoreError::Unresolved {
                signal,
                location: code.to_string(),
                week_end,
            }
        })
    }

    /// Deterministic text serialization, used to assert snapshot isolation.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut out = format!("as_of,{}\n", self.as_of);
        for ((signal, code), s) in &self.series {
            for (date, v) in s.iter() {
                out.push_str(&format!("{signal},{code},{date},{}\n", fmt_f64(v)));
            }
        }
        out.into_bytes()
    }
}
