//! Truth file formats.
//!
//! The hub-style long format is one file per `(signal, version_date)`,
//! named `<signal>_<YYYY-MM-DD>.csv`, with header `location,date,value`.
//! The wide format carries one row per location with header
//! `location,name,<date>,<date>,...` and is accepted for convenience.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::{DatedSeries, Signal, StoreError};
use crate::numeric::fmt_f64;

pub const TRUTH_HEADER: &str = "location,date,value";

/// Layout of a raw truth file handed to [`super::Store::ingest_version`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    /// `location,date,value` rows of cumulative counts.
    HubTruth(Signal),
    /// `location,name,<date>...` rows of cumulative counts.
    Wide(Signal),
}

impl IngestFormat {
    pub fn signal(self) -> Signal {
        match self {
            IngestFormat::HubTruth(s) | IngestFormat::Wide(s) => s,
        }
    }
}

#[derive(Debug)]
pub(crate) struct ParsedLocation {
    pub name: Option<String>,
    pub series: DatedSeries,
}

pub fn truth_file_name(signal: Signal, version_date: NaiveDate) -> String {
    format!("{}_{}.csv", signal.truth_name(), version_date.format("%Y-%m-%d"))
}

/// Splits `<signal>_<YYYY-MM-DD>.csv` into its parts.
pub fn parse_truth_file_name(name: &str) -> Option<(Signal, NaiveDate)> {
    let stem = name.strip_suffix(".csv")?;
    let (signal, date) = stem.rsplit_once('_')?;
    Some((Signal::from_truth_name(signal)?, date.parse().ok()?))
}

/// Serializes cumulative series in the hub-style long format.
pub fn write_truth_file<'a>(series: impl IntoIterator<Item = (&'a str, &'a DatedSeries)>) -> Vec<u8> {
    let mut out = String::from(TRUTH_HEADER);
    out.push('\n');
    for (code, s) in series {
        for (date, v) in s.iter() {
            out.push_str(&format!("{code},{date},{}\n", fmt_f64(v)));
        }
    }
    out.into_bytes()
}

fn malformed(line: u64, reason: impl Into<String>) -> StoreError {
    StoreError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_value(raw: &str, line: u64, location: &str) -> Result<f64, StoreError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| malformed(line, format!("value `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("value `{raw}` is not finite")));
    }
    if v < 0.0 {
        return Err(StoreError::NegativeValue {
            line,
            location: location.to_string(),
        });
    }
    Ok(v)
}

fn parse_date(raw: &str, line: u64) -> Result<NaiveDate, StoreError> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|_| malformed(line, format!("`{raw}` is not an ISO-8601 date")))
}

fn check_location(code: &str, line: u64) -> Result<(), StoreError> {
    if code.is_empty() || !code.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(line, format!("location `{code}` is not a digit-only code")));
    }
    Ok(())
}

/// Parses a truth file and checks per-row constraints plus contiguity of
/// each location's date range. No row may be dated after `version_date`.
pub(crate) fn parse_truth(
    raw: &[u8],
    version_date: NaiveDate,
    format: IngestFormat,
) -> Result<BTreeMap<String, ParsedLocation>, StoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| malformed(1, e.to_string()))?,
        None => return Err(malformed(1, "missing header")),
    };
    let mut points: BTreeMap<String, (Option<String>, BTreeMap<NaiveDate, f64>)> = BTreeMap::new();

    match format {
        IngestFormat::HubTruth(_) => {
            let cols: Vec<&str> = header.iter().collect();
            if cols != ["location", "date", "value"] {
                return Err(malformed(1, format!("expected header `{TRUTH_HEADER}`")));
            }
            for (i, rec) in records.enumerate() {
                let line = i as u64 + 2;
                let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
                if rec.len() != 3 {
                    return Err(malformed(line, format!("expected 3 fields, found {}", rec.len())));
                }
                let code = &rec[0];
                check_location(code, line)?;
                let date = parse_date(&rec[1], line)?;
                let value = parse_value(&rec[2], line, code)?;
                insert_point(&mut points, code, None, date, value, version_date, line)?;
            }
        }
        IngestFormat::Wide(_) => {
            if header.len() < 3 || &header[0] != "location" || &header[1] != "name" {
                return Err(malformed(1, "expected header `location,name,<date>,...`"));
            }
            let dates = header
                .iter()
                .skip(2)
                .map(|h| parse_date(h, 1))
                .collect::<Result<Vec<_>, _>>()?;
            for (i, rec) in records.enumerate() {
                let line = i as u64 + 2;
                let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
                if rec.len() != header.len() {
                    return Err(malformed(
                        line,
                        format!("expected {} fields, found {}", header.len(), rec.len()),
                    ));
                }
                let code = &rec[0];
                check_location(code, line)?;
                let name = (!rec[1].is_empty()).then(|| rec[1].to_string());
                for (date, raw) in dates.iter().zip(rec.iter().skip(2)) {
                    let value = parse_value(raw, line, code)?;
                    insert_point(&mut points, code, name.clone(), *date, value, version_date, line)?;
                }
            }
        }
    }

    points
        .into_iter()
        .map(|(code, (name, days))| {
            let start = *days.keys().next().expect("non-empty by construction");
            let values: Vec<f64> = days.values().copied().collect();
            let series = DatedSeries::new(start, values);
            if series.end() != *days.keys().next_back().unwrap() {
                return Err(StoreError::NonContiguous { location: code });
            }
            Ok((code, ParsedLocation { name, series }))
        })
        .collect()
}

fn insert_point(
    points: &mut BTreeMap<String, (Option<String>, BTreeMap<NaiveDate, f64>)>,
    code: &str,
    name: Option<String>,
    date: NaiveDate,
    value: f64,
    version_date: NaiveDate,
    line: u64,
) -> Result<(), StoreError> {
    if date > version_date {
        return Err(malformed(
            line,
            format!("date {date} is after the version date {version_date}"),
        ));
    }
    let entry = points.entry(code.to_string()).or_default();
    if name.is_some() {
        entry.0 = name;
    }
    if entry.1.insert(date, value).is_some() {
        return Err(malformed(line, format!("duplicate row for {code} on {date}")));
    }
    Ok(())
}
