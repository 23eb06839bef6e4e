//! Hub-style submission files.
//!
//! Header `forecast_date,target,target_end_date,location,type,quantile,value`.
//! Targets follow `<k> wk ahead <inc|cum> <case|death>`; `type` is `point`
//! or `quantile`, and `quantile` is `NA` on point rows. Targets outside that
//! grammar (daily horizons, other signals, horizons beyond four weeks) are
//! skipped and counted.
//!
//! The canonical encoding orders entries by target, writes the point row
//! before the quantile rows, quantiles by ascending level, and formats every
//! number in its shortest round-trip form.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::{is_aligned, ForecastError, ForecastSet, ForecastValue, Quantile, TargetKind, TargetSpec};
use crate::numeric::fmt_f64;
use crate::store::{LocationId, Signal};

pub const SUBMISSION_HEADER: &str = "forecast_date,target,target_end_date,location,type,quantile,value";

const MAX_HORIZON_WEEKS: u32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSubmission {
    pub set: ForecastSet,
    /// Rows whose target is outside the supported grammar.
    pub skipped: usize,
}

fn malformed(line: u64, reason: impl Into<String>) -> ForecastError {
    ForecastError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// `Some((horizon, kind, signal))` for supported targets, `None` for rows
/// that should be skipped.
fn parse_target(target: &str) -> Option<(u32, TargetKind, Signal)> {
    let parts: Vec<&str> = target.split_whitespace().collect();
    let [k, "wk", "ahead", kind, signal] = parts.as_slice() else {
        return None;
    };
    let horizon: u32 = k.parse().ok()?;
    if !(1..=MAX_HORIZON_WEEKS).contains(&horizon) {
        return None;
    }
    let kind = match *kind {
        "inc" => TargetKind::Incident,
        "cum" => TargetKind::Cumulative,
        _ => return None,
    };
    let signal = match *signal {
        "case" => Signal::Cases,
        "death" => Signal::Deaths,
        _ => return None,
    };
    Some((horizon, kind, signal))
}

#[derive(Default)]
struct Pending {
    point: Option<f64>,
    quantiles: Vec<Quantile>,
    line: u64,
}

/// Parses a submission. `origin`, when given, must match every row's
/// `forecast_date`; it is required for files without rows.
pub fn parse_submission(
    raw: &[u8],
    method_id: &str,
    origin: Option<NaiveDate>,
) -> Result<ParsedSubmission, ForecastError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(SUBMISSION_HEADER.split(',')) => {}
        _ => return Err(ForecastError::MissingHeader),
    }

    let mut origin = origin;
    let mut skipped = 0;
    let mut pending: BTreeMap<TargetSpec, Pending> = BTreeMap::new();
    for (i, rec) in records.enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        if rec.len() != 7 {
            return Err(malformed(line, format!("expected 7 fields, found {}", rec.len())));
        }
        let date = |raw: &str| {
            NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                .map_err(|_| malformed(line, format!("`{raw}` is not an ISO-8601 date")))
        };
        let forecast_date = date(&rec[0])?;
        match origin {
            Some(o) if o != forecast_date => {
                return Err(malformed(
                    line,
                    format!("forecast_date {forecast_date} differs from origin {o}"),
                ))
            }
            _ => origin = Some(forecast_date),
        }
        let Some((horizon, kind, signal)) = parse_target(&rec[1]) else {
            skipped += 1;
            continue;
        };
        let end = date(&rec[2])?;
        if !is_aligned(forecast_date, horizon, end) {
            return Err(ForecastError::Misaligned {
                line,
                origin: forecast_date,
                horizon,
                end,
            });
        }
        let code = &rec[3];
        if code.is_empty() {
            return Err(malformed(line, "empty location"));
        }
        let target = TargetSpec {
            location: LocationId::new(code),
            signal,
            kind,
            horizon_weeks: horizon,
            target_week_end: end,
        };
        let slot = pending.entry(target).or_default();
        slot.line = line;
        let value_raw = &rec[6];
        match &rec[4] {
            "point" => {
                if &rec[5] != "NA" && !rec[5].is_empty() {
                    return Err(malformed(line, "point rows must carry quantile NA"));
                }
                let v: f64 = value_raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| ForecastError::NonNumericPoint {
                        line,
                        value: value_raw.to_string(),
                    })?;
                if slot.point.replace(v).is_some() {
                    return Err(malformed(line, "duplicate point row"));
                }
            }
            "quantile" => {
                let level: f64 = rec[5]
                    .parse()
                    .ok()
                    .filter(|l: &f64| *l > 0.0 && *l < 1.0)
                    .ok_or_else(|| ForecastError::QuantileLevel {
                        line,
                        level: rec[5].to_string(),
                    })?;
                let value: f64 = value_raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| malformed(line, format!("quantile value `{value_raw}` is not numeric")))?;
                if slot.quantiles.iter().any(|q| q.level == level) {
                    return Err(malformed(line, format!("duplicate quantile level {level}")));
                }
                slot.quantiles.push(Quantile { level, value });
            }
            other => return Err(malformed(line, format!("unknown type `{other}`"))),
        }
    }

    let origin = origin.ok_or(ForecastError::UnknownOrigin)?;
    let mut set = ForecastSet::new(method_id, origin);
    for (target, p) in pending {
        let quantiles = (!p.quantiles.is_empty()).then_some(p.quantiles);
        let value = ForecastValue::new(p.point, quantiles, None)
            .map_err(|e| malformed(p.line, e.to_string()))?;
        set.insert(target, value).map_err(|e| match e {
            ForecastError::Misaligned { origin, horizon, end, .. } => ForecastError::Misaligned {
                line: p.line,
                origin,
                horizon,
                end,
            },
            other => malformed(p.line, other.to_string()),
        })?;
    }
    if skipped > 0 {
        log::warn!("{method_id} {origin}: skipped {skipped} rows with unsupported targets");
    }
    Ok(ParsedSubmission { set, skipped })
}

/// Canonical encoding of the point and quantile forms. Bins are not part of
/// the submission format and are dropped.
pub fn write_submission(fs: &ForecastSet) -> Vec<u8> {
    let mut out = String::from(SUBMISSION_HEADER);
    out.push('\n');
    for (target, value) in fs.entries() {
        let prefix = format!(
            "{},{} wk ahead {} {},{},{}",
            fs.origin,
            target.horizon_weeks,
            target.kind.word(),
            target.signal.target_word(),
            target.target_week_end,
            target.location.code,
        );
        if let Some(p) = value.point() {
            out.push_str(&format!("{prefix},point,NA,{}\n", fmt_f64(p)));
        }
        for q in value.quantiles().unwrap_or_default() {
            out.push_str(&format!(
                "{prefix},quantile,{},{}\n",
                fmt_f64(q.level),
                fmt_f64(q.value)
            ));
        }
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::TargetType;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn file(rows: &[&str]) -> Vec<u8> {
        let mut s = format!("{SUBMISSION_HEADER}\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s.into_bytes()
    }

    #[test]
    fn point_row_maps_to_entry() {
        let raw = file(&["2020-07-05,4 wk ahead inc death,2020-08-01,06,point,NA,510.0"]);
        let parsed = parse_submission(&raw, "team-a", None).unwrap();
        assert_eq!(parsed.set.origin, d("2020-07-05"));
        let (target, value) = parsed.set.entries().iter().next().unwrap();
        assert_eq!(target.horizon_weeks, 4);
        assert_eq!(target.kind, TargetKind::Incident);
        assert_eq!(target.signal, Signal::Deaths);
        assert_eq!(target.location.code, "06");
        assert_eq!(value.point(), Some(510.0));
    }

    #[test]
    fn quantile_rows_sorted_into_one_entry() {
        let raw = file(&[
            "2020-07-05,1 wk ahead inc death,2020-07-12,06,quantile,0.975,80",
            "2020-07-05,1 wk ahead inc death,2020-07-12,06,quantile,0.025,20",
        ]);
        let parsed = parse_submission(&raw, "m", None).unwrap();
        assert_eq!(parsed.set.len(), 1);
        let q = parsed.set.entries().values().next().unwrap().quantiles().unwrap().to_vec();
        assert_eq!(q, vec![Quantile { level: 0.025, value: 20.0 }, Quantile { level: 0.975, value: 80.0 }]);
    }

    #[test]
    fn off_by_one_target_end_is_an_alignment_error() {
        let raw = file(&[
            "2020-07-05,1 wk ahead inc death,2020-07-12,06,point,NA,1",
            "2020-07-05,2 wk ahead inc death,2020-07-20,06,point,NA,1",
        ]);
        match parse_submission(&raw, "m", None) {
            Err(ForecastError::Misaligned { line, horizon, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(horizon, 2);
            }
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn row_level_errors() {
        assert!(matches!(parse_submission(b"a,b\n", "m", None), Err(ForecastError::MissingHeader)));
        let bad_level = file(&["2020-07-05,1 wk ahead inc death,2020-07-12,06,quantile,1.5,3"]);
        assert!(matches!(
            parse_submission(&bad_level, "m", None),
            Err(ForecastError::QuantileLevel { line: 2, .. })
        ));
        let bad_point = file(&["2020-07-05,1 wk ahead inc death,2020-07-12,06,point,NA,many"]);
        assert!(matches!(
            parse_submission(&bad_point, "m", None),
            Err(ForecastError::NonNumericPoint { line: 2, .. })
        ));
    }

    #[test]
    fn unsupported_targets_skipped() {
        let raw = file(&[
            "2020-07-05,1 day ahead inc hosp,2020-07-06,06,point,NA,3",
            "2020-07-05,7 wk ahead cum death,2020-08-23,06,point,NA,3",
            "2020-07-05,1 wk ahead cum death,2020-07-11,US,point,NA,3",
        ]);
        let parsed = parse_submission(&raw, "m", None).unwrap();
        assert_eq!(parsed.skipped, 2);
        assert_eq!(parsed.set.len(), 1);
    }

    #[test]
    fn canonical_row_order() {
        let origin = d("2020-07-05");
        let mut fs = ForecastSet::new("m", origin);
        let target = TargetSpec::ahead(LocationId::new("06"), TargetType::INC_DEATH, origin, 1);
        let qs = vec![Quantile { level: 0.975, value: 30.0 }, Quantile { level: 0.025, value: 10.0 }];
        fs.insert(target, ForecastValue::new(Some(20.0), Some(qs), None).unwrap()).unwrap();
        let text = String::from_utf8(write_submission(&fs)).unwrap();
        assert_eq!(
            text,
            "forecast_date,target,target_end_date,location,type,quantile,value\n\
             2020-07-05,1 wk ahead inc death,2020-07-12,06,point,NA,20\n\
             2020-07-05,1 wk ahead inc death,2020-07-12,06,quantile,0.025,10\n\
             2020-07-05,1 wk ahead inc death,2020-07-12,06,quantile,0.975,30\n"
        );
    }

    #[test]
    fn empty_set_is_header_only() {
        let fs = ForecastSet::new("m", d("2020-07-05"));
        assert_eq!(write_submission(&fs), format!("{SUBMISSION_HEADER}\n").into_bytes());
        let back = parse_submission(&write_submission(&fs), "m", Some(fs.origin)).unwrap();
        assert_eq!(back.set, fs);
        assert!(matches!(
            parse_submission(&write_submission(&fs), "m", None),
            Err(ForecastError::UnknownOrigin)
        ));
    }

    fn arb_value() -> impl Strategy<Value = ForecastValue> {
        let point = prop::option::of(0.0f64..1e7);
        let quantiles = prop::option::of(prop::collection::btree_map(1u32..999, 0.0f64..1e5, 1..8));
        (point, quantiles)
            .prop_filter("some form", |(p, q)| p.is_some() || q.is_some())
            .prop_map(|(p, q)| {
                let qs = q.map(|m| {
                    let mut acc = 0.0;
                    m.into_iter()
                        .map(|(l, step)| {
                            acc += step;
                            Quantile { level: l as f64 / 1000.0, value: acc }
                        })
                        .collect()
                });
                ForecastValue::new(p, qs, None).unwrap()
            })
    }

    proptest! {
        #[test]
        fn round_trip_and_idempotent_write(
            origin_offset in 0i64..400,
            entries in prop::collection::vec(
                (0u32..60, 1u32..=4, 0usize..4, any::<bool>(), arb_value()), 0..12),
        ) {
            let origin = d("2020-03-01") + chrono::Duration::days(origin_offset);
            let mut fs = ForecastSet::new("m", origin);
            for (loc, h, tt, hub, value) in entries {
                let target_type = [
                    TargetType { signal: Signal::Deaths, kind: TargetKind::Incident },
                    TargetType { signal: Signal::Deaths, kind: TargetKind::Cumulative },
                    TargetType { signal: Signal::Cases, kind: TargetKind::Incident },
                    TargetType { signal: Signal::Cases, kind: TargetKind::Cumulative },
                ][tt];
                let mut target = TargetSpec::ahead(LocationId::new(format!("{loc:02}")), target_type, origin, h);
                if hub {
                    target.target_week_end = crate::forecast::hub_week_end(origin, h);
                }
                fs.insert(target, value).unwrap();
            }
            let bytes = write_submission(&fs);
            let back = parse_submission(&bytes, "m", Some(origin)).unwrap();
            prop_assert_eq!(&back.set, &fs);
            prop_assert_eq!(write_submission(&back.set), bytes);
        }
    }
}
